#pragma once

// Inference accounting: per-call records tagged with component, query
// instance and search phase; grouped totals; dollar cost; policy diversity.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arbor/structures.hpp"

namespace arbor {

enum class Phase { none, selection, expansion, simulation, backprop, chain_step, judge };

std::string_view to_string(Phase p);
std::optional<Phase> phase_from_string(std::string_view s);

struct PhaseContext {
    Phase phase = Phase::none;
    int iteration = 0;
    int depth = 0;
    int query_idx = 0;

    friend bool operator==(const PhaseContext&, const PhaseContext&) = default;
};

/// Current search context shared by the components of one query worker.
class PhaseTracker {
  public:
    const PhaseContext& current() const noexcept { return ctx_; }
    void set(PhaseContext ctx) noexcept { ctx_ = ctx; }

  private:
    PhaseContext ctx_;
};

/// Sets a phase on construction and restores the previous one on exit.
class PhaseScope {
  public:
    PhaseScope(PhaseTracker& tracker, PhaseContext ctx) : tracker_(tracker), saved_(tracker.current())
    {
        tracker_.set(ctx);
    }
    ~PhaseScope() { tracker_.set(saved_); }
    PhaseScope(const PhaseScope&) = delete;
    PhaseScope& operator=(const PhaseScope&) = delete;

  private:
    PhaseTracker& tracker_;
    PhaseContext saved_;
};

struct InferenceRecord {
    std::string component;
    int query_idx = 0;
    PhaseContext phase;
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    double latency_ms = 0.0;
    std::string model_id;
    /// Milliseconds since the Unix epoch.
    long long timestamp_ms = 0;
    /// True when token counts came from the whitespace fallback counter.
    bool approximate_usage = false;

    friend bool operator==(const InferenceRecord&, const InferenceRecord&) = default;
};

Json to_json(const InferenceRecord& r);
InferenceRecord inference_record_from_json(const Json& j);

class LogIoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Append-only JSON-lines log of inference records. Safe for concurrent
/// appenders; each record is written and flushed under one lock.
class InferenceLogger {
  public:
    using Clock = std::function<long long()>;

    InferenceLogger() = default;
    explicit InferenceLogger(std::filesystem::path file);

    void set_clock(Clock clock) { clock_ = std::move(clock); }
    /// Stamps `timestamp_ms` when it is zero, then appends.
    void log(InferenceRecord record);

    std::vector<InferenceRecord> records() const;
    std::vector<InferenceRecord> filter(Phase phase) const;
    std::size_t size() const;

    static std::vector<InferenceRecord> read_file(const std::filesystem::path& file);

  private:
    mutable std::mutex mu_;
    std::vector<InferenceRecord> records_;
    std::optional<std::filesystem::path> file_;
    std::ofstream out_;
    Clock clock_;
};

enum class GroupBy { component, instance, phase };

struct UsageTotals {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    double latency_ms = 0.0;
    long long calls = 0;

    void add(const InferenceRecord& r);
    friend bool operator==(const UsageTotals&, const UsageTotals&) = default;
};

std::map<std::string, UsageTotals> aggregate(const std::vector<InferenceRecord>& records, GroupBy by);
UsageTotals grand_total(const std::vector<InferenceRecord>& records);
UsageTotals sum_groups(const std::map<std::string, UsageTotals>& groups);

struct ModelPrice {
    double input_per_million = 0.0;
    double output_per_million = 0.0;
};

class PricingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Per-model token prices in dollars per million tokens.
class CostModel {
  public:
    void set_price(std::string model_id, ModelPrice price);
    const ModelPrice& price(const std::string& model_id) const;
    bool has(const std::string& model_id) const { return prices_.count(model_id) > 0; }

    /// Reads `{"model": {"input": 3.0, "output": 15.0}, ...}`.
    static CostModel from_json(const Json& j);
    Json to_json() const;

  private:
    std::map<std::string, ModelPrice> prices_;
};

double compute_cost(const UsageTotals& totals, const ModelPrice& price);
double compute_cost(const UsageTotals& totals, const std::string& model_id, const CostModel& model);
/// Sums the cost of every record using its own model id.
double compute_cost(const std::vector<InferenceRecord>& records, const CostModel& model);

struct PolicyCall {
    std::string state_key;
    std::string output;
    bool correct = false;
};

struct DiversityReport {
    long long unique_states = 0;
    double avg_policy_calls_per_state = 0.0;
    double duplicate_rate = 0.0;
    double duplicate_rate_incorrect = 0.0;
    double correct_fraction = 0.0;
    long long total_calls = 0;
};

/// A call counts as a duplicate when its output already appeared earlier for
/// the same state. The incorrect-only rate uses incorrect calls as both
/// numerator and denominator population.
DiversityReport diversity_report(const std::vector<PolicyCall>& log);
Json to_json(const DiversityReport& r);

}  // namespace arbor
