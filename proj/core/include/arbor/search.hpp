#pragma once

/**
 * @file search.hpp
 * @brief Tree search engines, chain agents and the CiT branching gate.
 *
 * Engines derive from TreeSearch and implement only the algorithm body. The
 * surrounding SearchSession owns the tree and handles root creation, node
 * expansion, terminal collection, per-iteration checkpoints, the runtime
 * limit and phase tagging of model calls.
 */

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arbor/components.hpp"
#include "arbor/observability.hpp"
#include "arbor/structures.hpp"

namespace arbor {

struct SearchConfig {
    int n_actions = 3;
    int n_iterations = 10;
    int max_depth = 6;
    int rollout_depth = 6;
    /// Defaults to n_actions.
    std::optional<int> beam_width;
    double uct_c = std::sqrt(2.0);
    bool early_terminate = false;
    /// Absent: the gate is off and every state branches. 0 forces a chain.
    std::optional<double> bn_threshold;
    std::optional<int> n_terminate;
    std::optional<double> runtime_limit_s;
    TemperatureSchedule temperature;

    int effective_beam_width() const noexcept { return beam_width.value_or(n_actions); }
    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
    Json to_json() const;
    static SearchConfig from_json(const Json& j);
};

struct SearchResult {
    Tree tree;
    /// Root first, following child links.
    std::vector<NodeId> best_path;
    /// In discovery order.
    std::vector<NodeId> terminals;
    bool success = false;
    std::optional<std::string> answer;
    /// Runtime limit hit or the search failed before finishing.
    bool partial = false;
    bool terminated_early = false;
    std::string error;
    int iterations = 0;
    /// Number of Policy::get_actions calls.
    int policy_calls = 0;
};

/// Receives the tree after every completed iteration.
class CheckpointSink {
  public:
    virtual ~CheckpointSink() = default;
    virtual void on_iteration(int query_idx, int iteration, const Tree& tree) = 0;
};

/// Branching-necessity score in [0, 1] for a state.
using CitEvaluator = std::function<double(const State& state)>;

enum class CitDecision { branch, chain };

/// Branch iff threshold > 0 and evaluator(state) >= threshold. An absent
/// threshold always branches; evaluator failures branch and warn.
CitDecision cit_gate(const State& state, const CitEvaluator& evaluator, std::optional<double> bn_threshold,
                     const WarningSink& warn = {});

using Clock = std::function<double()>;

/// Seconds from a steady clock.
double steady_seconds();

struct SearchContext {
    Task task;
    Policy* policy = nullptr;
    Transition* transition = nullptr;
    RewardModel* reward = nullptr;
    std::shared_ptr<PhaseTracker> tracker;
    SearchConfig config;
    CheckpointSink* sink = nullptr;
    Clock clock = steady_seconds;
    WarningSink warn;
    /// Overrides the default CiT evaluator (reward of the best child, or of the node itself).
    CitEvaluator cit_evaluator;

    static SearchContext from(Components& c, Task task, SearchConfig config);
};

/// Thrown inside an engine body when the runtime limit passes.
class RuntimeLimitReached : public std::runtime_error {
  public:
    RuntimeLimitReached() : std::runtime_error("runtime limit reached") {}
};

class SearchSession {
  public:
    explicit SearchSession(SearchContext ctx);

    const SearchConfig& config() const noexcept { return ctx_.config; }
    const Task& task() const noexcept { return ctx_.task; }
    Tree& tree() noexcept { return tree_; }
    const Tree& tree() const noexcept { return tree_; }
    Transition& transition() { return *ctx_.transition; }
    RewardModel& reward() { return *ctx_.reward; }

    NodeId root();

    /// Proposes up to `n` actions at `id`, steps and scores each, and adds
    /// the children. Stops early once n_terminate terminals exist.
    std::vector<NodeId> expand(NodeId id, int n, Phase phase = Phase::expansion);

    /// Number of actions to request at `id` under the CiT gate.
    int branching_width(NodeId id);

    /// Binds `phase` for model calls made while the returned scope lives.
    PhaseScope phase(Phase phase, int depth);

    void set_iteration(int iteration) noexcept { iteration_ = iteration; }
    /// Writes the per-iteration checkpoint and counts the iteration.
    void complete_iteration(int iteration);

    /// Throws RuntimeLimitReached when the limit has passed.
    void check_time() const;

    bool goal_found() const noexcept { return first_goal_.has_value(); }
    std::optional<NodeId> first_goal() const noexcept { return first_goal_; }
    bool enough_terminals() const noexcept;
    /// True when the engine should stop: n_terminate reached, or a goal was
    /// found with early termination on.
    bool should_stop() const noexcept;

    const std::vector<NodeId>& terminals() const noexcept { return terminals_; }
    void set_best(NodeId id) { best_ = id; }
    std::optional<NodeId> best() const noexcept { return best_; }

    int policy_calls() const noexcept { return policy_calls_; }
    int iterations() const noexcept { return iterations_; }
    void warn(const std::string& message) const;

    /// Reward of the best existing child, or the node's own reward.
    double default_branch_score(NodeId id) const;

  private:
    SearchContext ctx_;
    Tree tree_;
    std::vector<NodeId> terminals_;
    std::optional<NodeId> first_goal_;
    std::optional<NodeId> best_;
    double started_ = 0.0;
    int iteration_ = 0;
    int iterations_ = 0;
    int policy_calls_ = 0;
};

/// Algorithm body run against a session.
class TreeSearch {
  public:
    virtual ~TreeSearch() = default;
    virtual std::string name() const = 0;
    virtual void search(SearchSession& session) = 0;
};

/// Runs an engine through the shared lifecycle and assembles the result.
SearchResult run_search(TreeSearch& engine, SearchContext ctx);

/// Child of `node` maximizing Q + c*sqrt(ln(N)/max(n, 1)), where Q is the
/// mean backed-up value, or the step reward for an unvisited child. Ties go
/// to the lowest id.
NodeId uct_select(const Tree& tree, NodeId node, double c);

/// Selection, expansion, greedy simulation and mean-value backpropagation.
class MctsSearch final : public TreeSearch {
  public:
    std::string name() const override { return "mcts"; }
    void search(SearchSession& session) override;
};

/// Level-synchronous expansion with beam pruning by reward.
class BfsSearch final : public TreeSearch {
  public:
    std::string name() const override { return "bfs"; }
    void search(SearchSession& session) override;
};

class NoAnswerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Most frequent answer; ties go to the lexicographically smallest.
std::string majority_vote(const std::vector<std::string>& answers);

/// Majority vote over the answers extracted from `terminals`.
std::string to_ensemble(const Tree& tree, const std::vector<NodeId>& terminals, const Transition& transition);

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

struct ChainResult {
    State state;
    bool finished = false;
    bool success = false;
    std::optional<std::string> answer;
    int policy_calls = 0;
};

using StepCallback = std::function<void(const State&)>;

/// One action per step until the transition reports done or `max_steps`
/// steps exist. Continues from `start` when given. `on_step` sees the state
/// after every appended step.
ChainResult run_chain(Policy& policy, Transition& transition, PhaseTracker& tracker, const Task& task,
                      int max_steps, std::optional<State> start = std::nullopt, const StepCallback& on_step = {},
                      Phase phase = Phase::chain_step);

/// Thought/action/observation loop over a tool set.
ChainResult react_chain(Components& components, const ResourceBundle& tools, const Task& task, int max_steps,
                        std::optional<State> start = std::nullopt, const StepCallback& on_step = {});

/// Greedy environment agent.
ChainResult env_chain(Components& components, const Task& task, int max_steps,
                      std::optional<State> start = std::nullopt, const StepCallback& on_step = {});

// ---------------------------------------------------------------------------
// Rollout-and-judge reward
// ---------------------------------------------------------------------------

/// Renders a trajectory for the judge prompt.
std::string render_trajectory(const State& state);

/// Completes `state` with the ReAct loop (phase simulation) unless it is
/// already done, then scores the result with `judge` (phase judge).
/// Unparseable judge output scores 0 and warns.
double lats_reward(const State& state, Policy& policy, Transition& transition, PhaseTracker& tracker,
                   const Task& task, int max_steps, const std::function<std::string(const State&)>& judge,
                   const WarningSink& warn = {});

class LatsReward final : public RewardModel {
  public:
    explicit LatsReward(const ComponentDeps& deps);
    double score(const State& state, const Step& step, const Task& task) override;
    void bind(Policy& policy, Transition& transition) override;

  private:
    Policy* policy_ = nullptr;
    Transition* transition_ = nullptr;
    std::shared_ptr<PhaseTracker> tracker_;
    int max_steps_;
};

}  // namespace arbor
