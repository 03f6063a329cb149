#pragma once

/**
 * @file domains.hpp
 * @brief Built-in tasks: block stacking, 5x5 crosswords, numeric math and a toy SQL lookup.
 *
 * Each domain ships a dataset, its transition where one is needed, and
 * scripted responders that stand in for a model in tests and mock runs.
 */

#include <array>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "arbor/backends.hpp"
#include "arbor/components.hpp"
#include "arbor/registry.hpp"
#include "arbor/tools.hpp"

namespace arbor {

/// Behaviour of a scripted stand-in model.
enum class Flavor { solver, adversarial };

// ---------------------------------------------------------------------------
// Block stacking
// ---------------------------------------------------------------------------

namespace blocks {

/// Stacks bottom to top plus the held block. Canonical form keeps stacks
/// ordered by their bottom block.
struct BlocksState {
    std::vector<std::vector<char>> stacks;
    std::optional<char> holding;

    void canonicalize();
    std::vector<char> blocks() const;
    friend bool operator==(const BlocksState&, const BlocksState&) = default;
};

/// "stack A B C | stack D | holding: none"
std::string render(const BlocksState& s);
/// Throws std::invalid_argument on malformed text or repeated blocks.
BlocksState parse(std::string_view text);

/// "X on Y" or "X on table".
struct GoalAtom {
    char block = 'A';
    std::optional<char> below;

    friend bool operator==(const GoalAtom&, const GoalAtom&) = default;
};

/// Comma-separated atoms such as "A on B, B on table".
std::vector<GoalAtom> parse_goal(std::string_view text);
std::string render_goal(const std::vector<GoalAtom>& goal);
bool satisfies(const BlocksState& s, const std::vector<GoalAtom>& goal);

/// Complete, duplicate-free legal moves in a fixed order.
std::vector<std::string> legal_actions(const BlocksState& s);

/// Why `action` is illegal in `s`, or nullopt.
std::optional<std::string> check_action(const BlocksState& s, std::string_view action);
/// Applies a legal action. Throws std::invalid_argument otherwise.
BlocksState apply(const BlocksState& s, std::string_view action);

/// Length of a shortest plan reaching the goal within `max_depth`, by
/// breadth-first enumeration.
std::optional<int> distance_to_goal(const BlocksState& s, const std::vector<GoalAtom>& goal, int max_depth);

struct Instance {
    BlocksState init;
    std::vector<GoalAtom> goal;

    std::string question() const;
};

/// Random start and goal configurations over `n_blocks` blocks; the start
/// never already satisfies the goal.
Instance random_instance(std::mt19937_64& rng, int n_blocks);

/// Reads the "Initial state:" line of a question.
BlocksState initial_from_question(std::string_view question);
/// Reads the "Goal:" line of a question.
std::string goal_from_question(std::string_view question);

class BlocksTransition final : public EnvTransition {
  public:
    explicit BlocksTransition(const ComponentDeps& deps);

  protected:
    std::string initial_render(const Task& task) const override;
    std::optional<std::string> check_command(const std::string& render, const std::string& command,
                                             const Task& task) const override;
    std::string apply_command(const std::string& render, const std::string& command, const Task& task) const override;
    GoalStatus check_goal(const std::string& render, const Task& task) const override;
    std::optional<std::vector<std::string>> legal_commands(const std::string& render, const Task& task) const override;
};

/// Built-in items are generated from a fixed seed; options may set
/// "data_file", "limit", "seed", "n_items" and "n_blocks".
class BlocksDataset final : public Dataset {
  public:
    std::vector<DatasetItem> load(const Json& options) const override;
    EvalOutcome evaluate(const DatasetItem& item, const State& final_state,
                         const std::optional<std::string>& answer) const override;
};

/// Policy side: the solver answers with a shortest-plan move first; the
/// adversarial one opens with the move that strays furthest from the goal.
/// Later samples of the same prompt walk the remaining legal moves from best
/// to worst. Reward side: "Score: 1" when the move shortens the distance to
/// the goal, else "Score: 0".
ScriptedBackend::Responder make_responder(Flavor flavor);

}  // namespace blocks

// ---------------------------------------------------------------------------
// Crosswords
// ---------------------------------------------------------------------------

namespace crosswords {

inline constexpr int kSize = 5;
/// 25 cells row-major; '_' marks a blank.
using Grid = std::string;

Grid empty_grid();
/// "Current Board:\nTASKS\n_____\n..."
std::string render_board(const Grid& g);
/// Throws std::invalid_argument when the text is not a rendered board.
Grid parse_board(std::string_view text);

struct Move {
    bool horizontal = true;
    int index = 0;
    std::string word;
};

/// Parses "<slot>. <word>" with slots h1-h5 and v1-v5.
std::variant<Move, std::string> parse_move(std::string_view command);
/// Letters of the ten slots, h1..h5 then v1..v5.
std::vector<std::string> slot_words(const Grid& g);
std::string slot_name(int slot);
/// Writes the word; crossing letters are overwritten.
Grid apply_move(const Grid& g, const Move& m);

struct ClueScore {
    bool exact = false;
    double partial = 0.0;
};
/// exact when all ten slots match the key; partial = matching slots / 10.
ClueScore eval_crosswords(const Grid& board, const Grid& key);

struct Puzzle {
    Grid key;
    std::vector<std::string> clues;

    std::string question() const;
};

/// Random letter grid with anagram clues for each slot.
Puzzle synthetic_puzzle(std::mt19937_64& rng);

class CrosswordsTransition final : public EnvTransition {
  public:
    explicit CrosswordsTransition(const ComponentDeps& deps);

  protected:
    std::string initial_render(const Task& task) const override;
    std::optional<std::string> check_command(const std::string& render, const std::string& command,
                                             const Task& task) const override;
    std::string apply_command(const std::string& render, const std::string& command, const Task& task) const override;
    /// Done when the board is full or solved; success when all ten slots match.
    GoalStatus check_goal(const std::string& render, const Task& task) const override;
};

/// Items carry the 25-letter key as both answer and goals.
class CrosswordsDataset final : public Dataset {
  public:
    std::vector<DatasetItem> load(const Json& options) const override;
    EvalOutcome evaluate(const DatasetItem& item, const State& final_state,
                         const std::optional<std::string>& answer) const override;
};

/// The responder reads keys from `items` by question. Solver fills the first
/// wrong slot; adversarial proposes six-letter words. The judge scores 1 when
/// the written slot matches the key.
ScriptedBackend::Responder make_responder(std::vector<DatasetItem> items, Flavor flavor);

}  // namespace crosswords

// ---------------------------------------------------------------------------
// Numeric answers
// ---------------------------------------------------------------------------

namespace math {

struct Rational {
    long long num = 0;
    long long den = 1;
};

/// Integers, decimals, "a/b" and "\frac{a}{b}", ignoring "$", "," and spaces.
std::optional<Rational> parse_rational(std::string_view text);
std::optional<double> parse_decimal(std::string_view text);

/// Exact rational equality when both parse, else |a - b| <= 1e-6.
/// Unparseable predictions are incorrect.
bool eval_math_answer(std::string_view predicted, std::string_view gold);

class MathDataset final : public Dataset {
  public:
    std::vector<DatasetItem> load(const Json& options) const override;
    EvalOutcome evaluate(const DatasetItem& item, const State& final_state,
                         const std::optional<std::string>& answer) const override;
};

/// Built-in arithmetic items.
std::vector<DatasetItem> builtin_items();

/// Step-writing and sub-question responders that know the gold answers of
/// `items`; the adversarial flavor answers off by one.
ScriptedBackend::Responder make_responder(std::vector<DatasetItem> items, Flavor flavor);

}  // namespace math

// ---------------------------------------------------------------------------
// Toy SQL lookup
// ---------------------------------------------------------------------------

namespace toysql {

/// Tables t(k, v) and places(name, city, country).
std::shared_ptr<KvDatabase> fixture_database();
std::shared_ptr<const ResourceBundle> fixture_resource();

struct SqlItem {
    DatasetItem item;
    std::string sql;
};
std::vector<SqlItem> builtin_items();

class SqlDataset final : public Dataset {
  public:
    std::vector<DatasetItem> load(const Json& options) const override;
    /// Case-insensitive comparison of trimmed answers.
    EvalOutcome evaluate(const DatasetItem& item, const State& final_state,
                         const std::optional<std::string>& answer) const override;
};

/// ReAct responder: look the answer up with query_sql, then finish with the
/// observation. The adversarial flavor sends malformed arguments first and
/// retries after the validation observation. The judge gives 9/10 to a trajectory ending in the
/// right answer, else 2/10.
ScriptedBackend::Responder make_responder(Flavor flavor);

}  // namespace toysql

/// Responder for `dataset` used by `--backend mock`. Throws NotFoundError
/// for datasets without a scripted responder.
ScriptedBackend::Responder mock_responder(const std::string& dataset, const std::vector<DatasetItem>& items,
                                          Flavor flavor = Flavor::solver);

}  // namespace arbor
