#pragma once

/**
 * @file structures.hpp
 * @brief Trajectory data model shared by search engines and components.
 *
 * Actions and steps are open hierarchies held by immutable shared pointers so
 * that extension code can add new variants. Every variant carries a type tag
 * and is reconstructed from JSON through a TypeRegistry, which makes
 * checkpoints self-describing:
 *
 * @code
 * {"__type__": "EnvState",
 *  "init_state": "Current Board:\n_____\n...",
 *  "query": "...",
 *  "steps": [{"__type__": "EnvStep", "action": "h1. tasks", "next_state": "..."}]}
 * @endcode
 */

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace arbor {

using Json = nlohmann::json;

inline constexpr std::string_view kTypeField = "__type__";

/// Raised when a document does not match the expected schema. `path()` names
/// the offending location, e.g. `steps[2].action`.
class SchemaError : public std::runtime_error {
  public:
    SchemaError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path))
    {
    }
    const std::string& path() const noexcept { return path_; }

  private:
    std::string path_;
};

class RegistrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

class ActionBase {
  public:
    virtual ~ActionBase() = default;
    virtual std::string_view type_tag() const = 0;
    /// Surface text of the action as a model would write it.
    virtual std::string text() const = 0;
    /// Payload fields, without the type tag.
    virtual Json fields() const = 0;
};

using Action = std::shared_ptr<const ActionBase>;

struct TextAction final : ActionBase {
    std::string text_;

    explicit TextAction(std::string text) : text_(std::move(text)) {}
    std::string_view type_tag() const override { return "TextAction"; }
    std::string text() const override { return text_; }
    Json fields() const override { return {{"text", text_}}; }
};

struct SubQuestionAction final : ActionBase {
    std::string sub_question;

    explicit SubQuestionAction(std::string q) : sub_question(std::move(q)) {}
    std::string_view type_tag() const override { return "SubQuestionAction"; }
    std::string text() const override { return sub_question; }
    Json fields() const override { return {{"sub_question", sub_question}}; }
};

struct EnvAction final : ActionBase {
    std::string command;

    explicit EnvAction(std::string c) : command(std::move(c)) {}
    std::string_view type_tag() const override { return "EnvAction"; }
    std::string text() const override { return command; }
    Json fields() const override { return {{"command", command}}; }
};

struct ToolAction final : ActionBase {
    std::string tool_name;
    Json arguments = Json::object();
    bool is_finish = false;
    /// Reasoning that produced the call. Carried to the ToolStep; not part of
    /// the action's serialized fields or equality.
    std::string thought;

    ToolAction(std::string name, Json args, bool finish = false, std::string thought_text = {})
        : tool_name(std::move(name)), arguments(std::move(args)), is_finish(finish), thought(std::move(thought_text))
    {
    }
    /// A finish action carrying the final answer under `arguments["answer"]`.
    static std::shared_ptr<const ToolAction> finish(std::string answer);

    std::string_view type_tag() const override { return "ToolAction"; }
    std::string text() const override;
    Json fields() const override
    {
        return {{"arguments", arguments}, {"is_finish", is_finish}, {"tool_name", tool_name}};
    }
    std::optional<std::string> answer() const;
};

template <class T, class... Args>
Action make_action(Args&&... args)
{
    return std::make_shared<const T>(std::forward<Args>(args)...);
}

/// Tag and payload equality.
bool equal(const Action& a, const Action& b);

template <class T>
const T* action_as(const Action& a)
{
    return dynamic_cast<const T*>(a.get());
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

class StepBase {
  public:
    virtual ~StepBase() = default;
    virtual std::string_view type_tag() const = 0;
    virtual Json fields() const = 0;
    virtual std::string render() const = 0;
    /// True for steps that record a rejected action.
    virtual bool has_error() const { return false; }
};

using Step = std::shared_ptr<const StepBase>;

struct ConcatStep final : StepBase {
    Action action;

    explicit ConcatStep(Action a) : action(std::move(a)) {}
    std::string_view type_tag() const override { return "ConcatStep"; }
    Json fields() const override;
    std::string render() const override { return action ? action->text() : std::string{}; }
};

struct SubQAStep final : StepBase {
    std::string sub_question;
    std::string sub_answer;

    SubQAStep(std::string q, std::string a) : sub_question(std::move(q)), sub_answer(std::move(a)) {}
    std::string_view type_tag() const override { return "SubQAStep"; }
    Json fields() const override { return {{"sub_answer", sub_answer}, {"sub_question", sub_question}}; }
    std::string render() const override;
};

/// One environment transition. Executed steps carry `next_state`; rejected
/// actions carry `error` and leave the environment unchanged.
struct EnvStep final : StepBase {
    std::string action;
    std::optional<std::string> next_state;
    std::optional<std::string> error;

    EnvStep(std::string a, std::optional<std::string> next, std::optional<std::string> err = std::nullopt)
        : action(std::move(a)), next_state(std::move(next)), error(std::move(err))
    {
    }
    std::string_view type_tag() const override { return "EnvStep"; }
    Json fields() const override;
    std::string render() const override;
    bool has_error() const override { return error.has_value(); }
};

/// Thought, action, observation triple of a tool-use agent.
struct ToolStep final : StepBase {
    std::string thought;
    std::shared_ptr<const ToolAction> action;
    std::optional<std::string> observation;

    ToolStep(std::string t, std::shared_ptr<const ToolAction> a, std::optional<std::string> obs)
        : thought(std::move(t)), action(std::move(a)), observation(std::move(obs))
    {
    }
    std::string_view type_tag() const override { return "ToolStep"; }
    Json fields() const override;
    std::string render() const override;
};

template <class T, class... Args>
Step make_step(Args&&... args)
{
    return std::make_shared<const T>(std::forward<Args>(args)...);
}

template <class T>
const T* step_as(const Step& s)
{
    return dynamic_cast<const T*>(s.get());
}

bool equal(const Step& a, const Step& b);

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

enum class StateKind { trajectory, env, tool, concat };

std::string_view state_tag(StateKind kind);
std::optional<StateKind> state_kind_from_tag(std::string_view tag);

/// Accumulated trajectory: the query, the initial rendering and every step
/// taken so far. Steps are append-only; `with_step` returns a new state.
class State {
  public:
    State() = default;
    State(StateKind kind, std::string query, std::string init_render, std::vector<Step> steps = {})
        : kind_(kind), query_(std::move(query)), init_render_(std::move(init_render)), steps_(std::move(steps))
    {
    }

    StateKind kind() const noexcept { return kind_; }
    const std::string& query() const noexcept { return query_; }
    const std::string& init_render() const noexcept { return init_render_; }
    const std::vector<Step>& steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return steps_.size(); }
    bool empty() const noexcept { return steps_.empty(); }

    State with_step(Step step) const;
    void append(Step step) { steps_.push_back(std::move(step)); }

    /// init_render followed by each step's rendering, newline separated.
    std::string render() const;

    friend bool operator==(const State& a, const State& b);

  private:
    StateKind kind_ = StateKind::trajectory;
    std::string query_;
    std::string init_render_;
    std::vector<Step> steps_;
};

// ---------------------------------------------------------------------------
// Type registry and serialization
// ---------------------------------------------------------------------------

class TypeRegistry;

struct ReadContext {
    const TypeRegistry& types;
    std::string path;

    ReadContext at(std::string_view child) const;
    ReadContext index(std::size_t i) const;
};

/// Maps type tags to reconstructors. Written during startup, read-only after.
class TypeRegistry {
  public:
    using ActionReconstructor = std::function<Action(const Json&, const ReadContext&)>;
    using StepReconstructor = std::function<Step(const Json&, const ReadContext&)>;

    /// Registry pre-populated with every built-in action, step and state tag.
    static TypeRegistry with_builtins();

    void register_action_type(std::string tag, ActionReconstructor fn);
    void register_step_type(std::string tag, StepReconstructor fn);

    bool contains(std::string_view tag) const;
    std::vector<std::string> tags() const;

    Action read_action(const Json& doc, const ReadContext& ctx) const;
    Step read_step(const Json& doc, const ReadContext& ctx) const;

  private:
    void claim(const std::string& tag);

    std::map<std::string, ActionReconstructor, std::less<>> actions_;
    std::map<std::string, StepReconstructor, std::less<>> steps_;
    std::map<std::string, int, std::less<>> claimed_;
};

/// Process-wide registry used when no registry is passed explicitly.
TypeRegistry& default_type_registry();

Json serialize_action(const Action& action);
Json serialize_step(const Step& step);
Json serialize_state(const State& state);

Action deserialize_action(const Json& doc, const TypeRegistry& types = default_type_registry());
Step deserialize_step(const Json& doc, const TypeRegistry& types = default_type_registry());
State deserialize_state(const Json& doc, const TypeRegistry& types = default_type_registry());

/// Canonical text form: keys sorted, two-space indent, UTF-8.
std::string dump_json(const Json& doc);

// Field readers used by reconstructors.
namespace schema {
std::string require_string(const Json& doc, std::string_view key, const ReadContext& ctx);
std::optional<std::string> optional_string(const Json& doc, std::string_view key, const ReadContext& ctx);
const Json& require_field(const Json& doc, std::string_view key, const ReadContext& ctx);
std::string require_tag(const Json& doc, const ReadContext& ctx);
}  // namespace schema

// ---------------------------------------------------------------------------
// Search tree
// ---------------------------------------------------------------------------

using NodeId = std::int64_t;

struct Node {
    NodeId id = 0;
    std::optional<NodeId> parent_id;
    std::vector<NodeId> child_ids;
    State state;
    double reward = 0.0;
    double value_sum = 0.0;
    int visits = 0;
    /// Simulations that ended at this node.
    int simulations = 0;
    int depth = 0;
    bool is_terminal = false;
    bool goal_reached = false;

    double mean_value() const noexcept { return visits > 0 ? value_sum / visits : 0.0; }
    bool expanded() const noexcept { return !child_ids.empty(); }

    friend bool operator==(const Node&, const Node&) = default;
};

/// Search tree with ids assigned by a monotone counter; the root is id 0.
class Tree {
  public:
    Tree() = default;
    /// Rebuilds a tree from nodes whose ids equal their positions.
    static Tree from_nodes(std::vector<Node> nodes);

    NodeId add_root(State state);
    NodeId add_child(NodeId parent, State state, double reward = 0.0);

    bool empty() const noexcept { return nodes_.empty(); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& root() const { return node(0); }
    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    /// Ids from the root down to `id`.
    std::vector<NodeId> path_to(NodeId id) const;

    /// Throws SchemaError describing the first violated structural invariant.
    void check_well_formed() const;

    friend bool operator==(const Tree&, const Tree&) = default;

  private:
    std::vector<Node> nodes_;
};

Json serialize_node(const Node& node);
Node deserialize_node(const Json& doc, const TypeRegistry& types = default_type_registry());
Json serialize_tree(const Tree& tree);
Tree deserialize_tree(const Json& doc, const TypeRegistry& types = default_type_registry());

}  // namespace arbor
