#pragma once

// Shared test helpers: scratch directories, explicit-tree toy components and
// independent oracles used by the unit and acceptance suites.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "arbor/components.hpp"
#include "arbor/observability.hpp"
#include "arbor/search.hpp"

namespace arbor::testing {

namespace fs = std::filesystem;

/// Directory removed on destruction.
class TempDir {
  public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& child) const { return path_ / child; }

  private:
    fs::path path_;
};

std::string slurp(const fs::path& file);
void spit(const fs::path& file, const std::string& text);
/// Relative paths of every regular file under `root`, sorted.
std::set<std::string> list_files(const fs::path& root);

/// Short text mixing ASCII, escapes and multi-byte UTF-8.
std::string random_text(std::mt19937_64& rng);
/// Random state drawing every action and step variant, including
/// error-annotated environment steps.
State random_state(std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Explicit toy trees
// ---------------------------------------------------------------------------

/// Node of a hand-written search tree. Actions are the child labels.
struct ToyNode {
    double reward = 0.0;
    bool goal = false;
    std::vector<std::string> children;
};

/// Keyed by path: "" for the root, "a", "a/b", ...
using ToyTree = std::map<std::string, ToyNode>;

/// Path key of a concat state whose steps are the labels taken.
std::string toy_key(const State& state);

/// Returns the first n children of the current node in listed order.
class ToyPolicy final : public Policy {
  public:
    ToyPolicy(const ComponentDeps& deps, const ToyTree* tree);
    std::vector<Action> get_actions(const State& state, int n, const Task& task) override;
    int calls = 0;

  private:
    const ToyTree* tree_;
};

/// Appends labels. A node is done when it is a goal or has no children.
class ToyTransition final : public Transition {
  public:
    ToyTransition(const ComponentDeps& deps, const ToyTree* tree);
    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::string> extract_answer(const State& state) const override;

  private:
    const ToyTree* tree_;
};

class ToyReward final : public RewardModel {
  public:
    ToyReward(const ComponentDeps& deps, const ToyTree* tree);
    double score(const State& state, const Step& step, const Task& task) override;

  private:
    const ToyTree* tree_;
};

/// Random tree with branching 1..max_branch up to `depth`; some leaves are goals.
ToyTree random_toy_tree(std::mt19937_64& rng, int depth, int max_branch);

struct BeamTrace {
    /// Keys expanded at each depth.
    std::vector<std::vector<std::string>> expanded;
    bool goal_found = false;
};

/// Level-synchronous beam search over an explicit tree, written from scratch.
BeamTrace oracle_beam(const ToyTree& tree, int beam, int max_depth);
/// True when some goal node lies within `max_depth` of the root.
bool oracle_goal_reachable(const ToyTree& tree, int max_depth);

// ---------------------------------------------------------------------------
// Generic predicate-driven components over concat states
// ---------------------------------------------------------------------------

/// Transition appending the action text; done and success are given by callbacks.
class ScriptTransition final : public Transition {
  public:
    using Goal = std::function<GoalStatus(const State&)>;
    ScriptTransition(const ComponentDeps& deps, Goal goal);
    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::string> extract_answer(const State& state) const override;

  private:
    Goal goal_;
};

class ScriptReward final : public RewardModel {
  public:
    using Fn = std::function<double(const State&, const Step&)>;
    ScriptReward(const ComponentDeps& deps, Fn fn);
    double score(const State& state, const Step& step, const Task& task) override;

  private:
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Shortest plan length for a block-stacking instance given as rendered
/// state and goal text, by exhaustive enumeration over on-relations.
std::optional<int> oracle_blocks_distance(const std::string& init_render, const std::string& goal_text,
                                          int max_depth);

/// Most frequent value by full counting; ties resolved to the smallest.
std::string brute_force_mode(const std::vector<std::string>& values);

struct BruteDiversity {
    long long unique_states = 0;
    double duplicate_rate = 0.0;
    double duplicate_rate_incorrect = 0.0;
    double correct_fraction = 0.0;
    double avg_calls_per_state = 0.0;
};

/// Pairwise O(n^2) duplicate detection over the whole log.
BruteDiversity brute_force_diversity(const std::vector<PolicyCall>& log);

}  // namespace arbor::testing
