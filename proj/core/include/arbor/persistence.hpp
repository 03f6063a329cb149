#pragma once

/**
 * @file persistence.hpp
 * @brief Run directory layout, checkpoints, resume and evaluation from artifacts.
 *
 * Search run:
 *   checkpoints/{q}_{i}.json, checkpoints/{q}_result.json,
 *   terminal_nodes/terminal_nodes_{q}.json, config.json, execution.log,
 *   eval.log, inferencelogger.log, treetojsonl.jsonl
 * Chain run:
 *   checkpoints/{q}.json, config.json, execution.log, eval.log,
 *   eval_results.json, inferencelogger.log
 */

#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arbor/registry.hpp"
#include "arbor/search.hpp"
#include "arbor/structures.hpp"

namespace arbor {

namespace fs = std::filesystem;

class ArtifactError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ResumeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// All artifacts of one run live under save_dir.
class RunDirectory {
  public:
    explicit RunDirectory(fs::path save_dir) : root_(std::move(save_dir)) {}

    /// base/{task}_{method}/run_{version}
    static fs::path conventional(const fs::path& base, const std::string& task, const std::string& method,
                                 const std::string& version);

    const fs::path& root() const noexcept { return root_; }
    fs::path checkpoints_dir() const { return root_ / "checkpoints"; }
    fs::path terminal_dir() const { return root_ / "terminal_nodes"; }
    fs::path iteration_checkpoint(int q, int iteration) const;
    fs::path result_file(int q) const;
    fs::path chain_checkpoint(int q) const;
    fs::path terminal_nodes_file(int q) const;
    fs::path config_file() const { return root_ / "config.json"; }
    fs::path execution_log() const { return root_ / "execution.log"; }
    fs::path eval_log() const { return root_ / "eval.log"; }
    fs::path inference_log() const { return root_ / "inferencelogger.log"; }
    fs::path tree_jsonl() const { return root_ / "treetojsonl.jsonl"; }
    fs::path eval_results() const { return root_ / "eval_results.json"; }

    /// Creates save_dir and checkpoints/.
    void prepare() const;

  private:
    fs::path root_;
};

/// Writes `text` to `file` through a temporary file and rename.
void write_text_atomic(const fs::path& file, const std::string& text);
std::string read_text(const fs::path& file);
Json read_json(const fs::path& file);

/// Append-only run log shared by query workers.
class ExecutionLog {
  public:
    explicit ExecutionLog(fs::path file);
    void info(const std::string& message);
    void warn(const std::string& message);

  private:
    void write(const char* level, const std::string& message);

    std::mutex mu_;
    fs::path file_;
};

void write_config(const RunDirectory& run, const Json& config);
Json read_config(const RunDirectory& run);

// ---------------------------------------------------------------------------
// Search artifacts
// ---------------------------------------------------------------------------

/// checkpoints/{q}_{iteration}.json holding the tree after that iteration.
void write_search_artifacts(const RunDirectory& run, int query_idx, int iteration, const std::string& query,
                            const Tree& tree);

/// Checkpoint sink writing one file per iteration for one query.
class SearchCheckpointWriter final : public CheckpointSink {
  public:
    SearchCheckpointWriter(RunDirectory run, std::string query) : run_(std::move(run)), query_(std::move(query)) {}
    void on_iteration(int query_idx, int iteration, const Tree& tree) override;

  private:
    RunDirectory run_;
    std::string query_;
};

/// checkpoints/{q}_result.json and terminal_nodes/terminal_nodes_{q}.json.
void write_search_result(const RunDirectory& run, int query_idx, const std::string& query,
                         const SearchResult& result);

struct StoredSearchResult {
    std::string query;
    std::optional<std::string> answer;
    bool success = false;
    bool partial = false;
    std::vector<NodeId> best_path;
    Tree tree;

    /// State at the end of the best path (the root state when empty).
    const State& final_state() const;
};

StoredSearchResult read_search_result(const RunDirectory& run, int query_idx,
                                      const TypeRegistry& types = default_type_registry());

/// One JSON line {node_id, parent_id, depth, reward, render} per node of `path`.
void append_tree_paths(const RunDirectory& run, const Tree& tree, const std::vector<NodeId>& path);

// ---------------------------------------------------------------------------
// Chain artifacts
// ---------------------------------------------------------------------------

/// checkpoints/{q}.json as {"query": ..., "state": ...}.
void write_chain_artifacts(const RunDirectory& run, int query_idx, const State& trajectory);

State read_chain_checkpoint(const RunDirectory& run, int query_idx,
                            const TypeRegistry& types = default_type_registry());

/// The last written trajectory of query `query_idx`. Throws ResumeError when
/// the checkpoint is missing or unreadable.
State resume_chain(const RunDirectory& run, int query_idx, const TypeRegistry& types = default_type_registry());

/// Query indices with a chain checkpoint or a search result, ascending.
std::vector<int> chain_query_indices(const RunDirectory& run);
std::vector<int> search_query_indices(const RunDirectory& run);

// ---------------------------------------------------------------------------
// Preference pairs from error-annotated steps
// ---------------------------------------------------------------------------

struct PreferencePair {
    std::string state_render;
    std::string valid_action;
    std::string invalid_action;
    std::string error;

    friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// Key identifying the situation before step `index` of `state`: the
/// environment render for environment states, otherwise the rendering of
/// the accepted steps so far.
std::string situation_key(const State& state, std::size_t index);

/// Joins every error step in `attempts` with every accepted step of
/// `successes` taken from the same situation.
std::vector<PreferencePair> preference_pairs(const std::vector<State>& attempts, const std::vector<State>& successes);

/// Pairs from all trajectories under the run. Successful trajectories are
/// chain checkpoints marked correct in eval_results.json and the best paths
/// of successful search results.
std::vector<PreferencePair> export_preference_pairs(const RunDirectory& run,
                                                    const TypeRegistry& types = default_type_registry());

// ---------------------------------------------------------------------------
// Evaluation from artifacts
// ---------------------------------------------------------------------------

/// Recomputes metrics from config.json, checkpoints and the inference log
/// without calling any model. Returns the eval_results.json document.
Json evaluate_run(const RunDirectory& run, const ComponentRegistry& registry,
                  const TypeRegistry& types = default_type_registry());

/// Writes eval.log, and eval_results.json when `results_file` is set, from evaluate_run.
Json write_evaluation(const RunDirectory& run, const ComponentRegistry& registry, bool results_file = true,
                      const TypeRegistry& types = default_type_registry());

}  // namespace arbor
