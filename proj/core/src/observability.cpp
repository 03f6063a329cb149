#include "arbor/observability.hpp"

#include <set>
#include <unordered_map>
#include <unordered_set>

namespace arbor {

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::none: return "none";
    case Phase::selection: return "selection";
    case Phase::expansion: return "expansion";
    case Phase::simulation: return "simulation";
    case Phase::backprop: return "backprop";
    case Phase::chain_step: return "chain_step";
    case Phase::judge: return "judge";
    }
    return "none";
}

std::optional<Phase> phase_from_string(std::string_view s)
{
    for (auto p : {Phase::none, Phase::selection, Phase::expansion, Phase::simulation, Phase::backprop,
                   Phase::chain_step, Phase::judge}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    return std::nullopt;
}

Json to_json(const InferenceRecord& r)
{
    return Json{{"component", r.component},
                {"query_idx", r.query_idx},
                {"phase", to_string(r.phase.phase)},
                {"iteration", r.phase.iteration},
                {"depth", r.phase.depth},
                {"prompt_tokens", r.prompt_tokens},
                {"completion_tokens", r.completion_tokens},
                {"latency_ms", r.latency_ms},
                {"model_id", r.model_id},
                {"timestamp_ms", r.timestamp_ms},
                {"approximate_usage", r.approximate_usage}};
}

InferenceRecord inference_record_from_json(const Json& j)
{
    InferenceRecord r;
    r.component = j.at("component").get<std::string>();
    r.query_idx = j.at("query_idx").get<int>();
    r.phase.phase = phase_from_string(j.at("phase").get<std::string>()).value_or(Phase::none);
    r.phase.iteration = j.at("iteration").get<int>();
    r.phase.depth = j.at("depth").get<int>();
    r.phase.query_idx = r.query_idx;
    r.prompt_tokens = j.at("prompt_tokens").get<long long>();
    r.completion_tokens = j.at("completion_tokens").get<long long>();
    r.latency_ms = j.at("latency_ms").get<double>();
    r.model_id = j.at("model_id").get<std::string>();
    r.timestamp_ms = j.at("timestamp_ms").get<long long>();
    r.approximate_usage = j.value("approximate_usage", false);
    return r;
}

InferenceLogger::InferenceLogger(std::filesystem::path file) : file_(std::move(file))
{
    out_.open(*file_, std::ios::app | std::ios::binary);
    if (!out_) {
        throw LogIoError("cannot open inference log " + file_->string());
    }
}

void InferenceLogger::log(InferenceRecord record)
{
    if (record.prompt_tokens < 0 || record.completion_tokens < 0) {
        throw std::invalid_argument("token counts must be non-negative");
    }
    std::lock_guard lock(mu_);
    if (record.timestamp_ms == 0) {
        record.timestamp_ms =
            clock_ ? clock_()
                   : std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    }
    if (file_) {
        out_ << to_json(record).dump() << '\n';
        out_.flush();
        if (!out_) {
            throw LogIoError("failed writing inference log " + file_->string());
        }
    }
    records_.push_back(std::move(record));
}

std::vector<InferenceRecord> InferenceLogger::records() const
{
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<InferenceRecord> InferenceLogger::filter(Phase phase) const
{
    std::lock_guard lock(mu_);
    std::vector<InferenceRecord> out;
    for (const auto& r : records_) {
        if (r.phase.phase == phase) {
            out.push_back(r);
        }
    }
    return out;
}

std::size_t InferenceLogger::size() const
{
    std::lock_guard lock(mu_);
    return records_.size();
}

std::vector<InferenceRecord> InferenceLogger::read_file(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw LogIoError("cannot read inference log " + file.string());
    }
    std::vector<InferenceRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        out.push_back(inference_record_from_json(Json::parse(line)));
    }
    return out;
}

void UsageTotals::add(const InferenceRecord& r)
{
    prompt_tokens += r.prompt_tokens;
    completion_tokens += r.completion_tokens;
    latency_ms += r.latency_ms;
    ++calls;
}

std::map<std::string, UsageTotals> aggregate(const std::vector<InferenceRecord>& records, GroupBy by)
{
    std::map<std::string, UsageTotals> out;
    for (const auto& r : records) {
        std::string key;
        switch (by) {
        case GroupBy::component: key = r.component; break;
        case GroupBy::instance: key = std::to_string(r.query_idx); break;
        case GroupBy::phase: key = std::string(to_string(r.phase.phase)); break;
        }
        out[key].add(r);
    }
    return out;
}

UsageTotals grand_total(const std::vector<InferenceRecord>& records)
{
    UsageTotals t;
    for (const auto& r : records) {
        t.add(r);
    }
    return t;
}

UsageTotals sum_groups(const std::map<std::string, UsageTotals>& groups)
{
    UsageTotals t;
    for (const auto& [_, g] : groups) {
        t.prompt_tokens += g.prompt_tokens;
        t.completion_tokens += g.completion_tokens;
        t.latency_ms += g.latency_ms;
        t.calls += g.calls;
    }
    return t;
}

void CostModel::set_price(std::string model_id, ModelPrice price)
{
    if (price.input_per_million < 0 || price.output_per_million < 0) {
        throw std::invalid_argument("prices must be non-negative");
    }
    prices_[std::move(model_id)] = price;
}

const ModelPrice& CostModel::price(const std::string& model_id) const
{
    auto it = prices_.find(model_id);
    if (it == prices_.end()) {
        throw PricingError("no price configured for model \"" + model_id + "\"");
    }
    return it->second;
}

CostModel CostModel::from_json(const Json& j)
{
    CostModel m;
    for (const auto& [model, p] : j.items()) {
        m.set_price(model, ModelPrice{p.at("input").get<double>(), p.at("output").get<double>()});
    }
    return m;
}

Json CostModel::to_json() const
{
    Json j = Json::object();
    for (const auto& [model, p] : prices_) {
        j[model] = {{"input", p.input_per_million}, {"output", p.output_per_million}};
    }
    return j;
}

double compute_cost(const UsageTotals& totals, const ModelPrice& price)
{
    return static_cast<double>(totals.prompt_tokens) * price.input_per_million / 1e6 +
           static_cast<double>(totals.completion_tokens) * price.output_per_million / 1e6;
}

double compute_cost(const UsageTotals& totals, const std::string& model_id, const CostModel& model)
{
    return compute_cost(totals, model.price(model_id));
}

double compute_cost(const std::vector<InferenceRecord>& records, const CostModel& model)
{
    std::map<std::string, UsageTotals> per_model;
    for (const auto& r : records) {
        per_model[r.model_id].add(r);
    }
    double total = 0.0;
    for (const auto& [id, t] : per_model) {
        total += compute_cost(t, id, model);
    }
    return total;
}

DiversityReport diversity_report(const std::vector<PolicyCall>& log)
{
    if (log.empty()) {
        throw std::invalid_argument("diversity report needs at least one policy call");
    }
    std::unordered_map<std::string, std::unordered_set<std::string>> seen;
    long long dup = 0, dup_incorrect = 0, incorrect = 0, correct = 0;
    for (const auto& c : log) {
        auto& outputs = seen[c.state_key];
        const bool is_dup = !outputs.insert(c.output).second;
        dup += is_dup;
        if (c.correct) {
            ++correct;
        } else {
            ++incorrect;
            dup_incorrect += is_dup;
        }
    }
    DiversityReport r;
    r.total_calls = static_cast<long long>(log.size());
    r.unique_states = static_cast<long long>(seen.size());
    const auto total = static_cast<double>(log.size());
    r.avg_policy_calls_per_state = total / static_cast<double>(r.unique_states);
    r.duplicate_rate = static_cast<double>(dup) / total;
    r.duplicate_rate_incorrect = incorrect > 0 ? static_cast<double>(dup_incorrect) / static_cast<double>(incorrect) : 0.0;
    r.correct_fraction = static_cast<double>(correct) / total;
    return r;
}

Json to_json(const DiversityReport& r)
{
    return Json{{"unique_states", r.unique_states},
                {"avg_policy_calls_per_state", r.avg_policy_calls_per_state},
                {"duplicate_rate", r.duplicate_rate},
                {"duplicate_rate_incorrect", r.duplicate_rate_incorrect},
                {"correct_fraction", r.correct_fraction},
                {"total_calls", r.total_calls}};
}

}  // namespace arbor
