#include "arbor/structures.hpp"

#include <algorithm>
#include <set>

namespace arbor {

// ---------------------------------------------------------------------------
// Actions and steps
// ---------------------------------------------------------------------------

std::shared_ptr<const ToolAction> ToolAction::finish(std::string answer)
{
    return std::make_shared<const ToolAction>("", Json{{"answer", std::move(answer)}}, true);
}

std::string ToolAction::text() const
{
    if (is_finish) {
        return "Final Answer: " + answer().value_or("");
    }
    return tool_name + " " + arguments.dump();
}

std::optional<std::string> ToolAction::answer() const
{
    auto it = arguments.find("answer");
    if (it == arguments.end()) {
        return std::nullopt;
    }
    return it->is_string() ? it->get<std::string>() : it->dump();
}

bool equal(const Action& a, const Action& b)
{
    if (!a || !b) {
        return !a && !b;
    }
    return a->type_tag() == b->type_tag() && a->fields() == b->fields();
}

bool equal(const Step& a, const Step& b)
{
    if (!a || !b) {
        return !a && !b;
    }
    return a->type_tag() == b->type_tag() && a->fields() == b->fields();
}

Json ConcatStep::fields() const
{
    return {{"action", serialize_action(action)}};
}

std::string SubQAStep::render() const
{
    return "Q: " + sub_question + "\nA: " + sub_answer;
}

Json EnvStep::fields() const
{
    Json j{{"action", action}};
    if (next_state) {
        j["next_state"] = *next_state;
    }
    if (error) {
        j["error"] = *error;
    }
    return j;
}

std::string EnvStep::render() const
{
    if (next_state) {
        return *next_state;
    }
    return "Invalid action: " + action + (error ? " (" + *error + ")" : std::string{});
}

Json ToolStep::fields() const
{
    Json j{{"thought", thought}, {"action", serialize_action(action)}};
    if (observation) {
        j["observation"] = *observation;
    }
    return j;
}

std::string ToolStep::render() const
{
    std::string out = "Thought: " + thought + "\n";
    if (action && action->is_finish) {
        out += "Final Answer: " + action->answer().value_or("");
        return out;
    }
    if (action) {
        out += "Action: " + action->tool_name + "\nAction Input: " + action->arguments.dump();
    }
    if (observation) {
        out += "\nObservation: " + *observation;
    }
    return out;
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

std::string_view state_tag(StateKind kind)
{
    switch (kind) {
    case StateKind::trajectory: return "TrajectoryState";
    case StateKind::env: return "EnvState";
    case StateKind::tool: return "ToolState";
    case StateKind::concat: return "ConcatState";
    }
    return "TrajectoryState";
}

std::optional<StateKind> state_kind_from_tag(std::string_view tag)
{
    for (auto k : {StateKind::trajectory, StateKind::env, StateKind::tool, StateKind::concat}) {
        if (state_tag(k) == tag) {
            return k;
        }
    }
    return std::nullopt;
}

State State::with_step(Step step) const
{
    State next = *this;
    next.steps_.push_back(std::move(step));
    return next;
}

std::string State::render() const
{
    std::string out = init_render_;
    for (const auto& s : steps_) {
        if (!out.empty()) {
            out += '\n';
        }
        out += s->render();
    }
    return out;
}

bool operator==(const State& a, const State& b)
{
    if (a.kind_ != b.kind_ || a.query_ != b.query_ || a.init_render_ != b.init_render_ ||
        a.steps_.size() != b.steps_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.steps_.size(); ++i) {
        if (!equal(a.steps_[i], b.steps_[i])) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Schema helpers
// ---------------------------------------------------------------------------

ReadContext ReadContext::at(std::string_view child) const
{
    return ReadContext{types, path.empty() ? std::string(child) : path + "." + std::string(child)};
}

ReadContext ReadContext::index(std::size_t i) const
{
    return ReadContext{types, path + "[" + std::to_string(i) + "]"};
}

namespace schema {

const Json& require_field(const Json& doc, std::string_view key, const ReadContext& ctx)
{
    if (!doc.is_object()) {
        throw SchemaError(ctx.path, "expected an object");
    }
    auto it = doc.find(key);
    if (it == doc.end()) {
        throw SchemaError(ctx.at(key).path, "missing field");
    }
    return *it;
}

std::string require_string(const Json& doc, std::string_view key, const ReadContext& ctx)
{
    const Json& v = require_field(doc, key, ctx);
    if (!v.is_string()) {
        throw SchemaError(ctx.at(key).path, "expected a string");
    }
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const Json& doc, std::string_view key, const ReadContext& ctx)
{
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw SchemaError(ctx.at(key).path, "expected a string");
    }
    return it->get<std::string>();
}

std::string require_tag(const Json& doc, const ReadContext& ctx)
{
    if (!doc.is_object()) {
        throw SchemaError(ctx.path, "expected an object");
    }
    auto it = doc.find(kTypeField);
    if (it == doc.end()) {
        throw SchemaError(ctx.path, "missing \"__type__\"");
    }
    if (!it->is_string()) {
        throw SchemaError(ctx.path, "\"__type__\" must be a string");
    }
    return it->get<std::string>();
}

}  // namespace schema

// ---------------------------------------------------------------------------
// Type registry
// ---------------------------------------------------------------------------

void TypeRegistry::claim(const std::string& tag)
{
    if (tag.empty()) {
        throw RegistrationError("type tag must be non-empty");
    }
    if (!claimed_.emplace(tag, 0).second) {
        throw RegistrationError("type tag \"" + tag + "\" is already registered");
    }
}

void TypeRegistry::register_action_type(std::string tag, ActionReconstructor fn)
{
    claim(tag);
    actions_.emplace(std::move(tag), std::move(fn));
}

void TypeRegistry::register_step_type(std::string tag, StepReconstructor fn)
{
    claim(tag);
    steps_.emplace(std::move(tag), std::move(fn));
}

bool TypeRegistry::contains(std::string_view tag) const
{
    return claimed_.find(tag) != claimed_.end();
}

std::vector<std::string> TypeRegistry::tags() const
{
    std::vector<std::string> out;
    for (const auto& [tag, _] : claimed_) {
        out.push_back(tag);
    }
    return out;
}

Action TypeRegistry::read_action(const Json& doc, const ReadContext& ctx) const
{
    std::string tag = schema::require_tag(doc, ctx);
    auto it = actions_.find(tag);
    if (it == actions_.end()) {
        throw SchemaError(ctx.path, "unknown action type \"" + tag + "\"");
    }
    return it->second(doc, ctx);
}

Step TypeRegistry::read_step(const Json& doc, const ReadContext& ctx) const
{
    std::string tag = schema::require_tag(doc, ctx);
    auto it = steps_.find(tag);
    if (it == steps_.end()) {
        throw SchemaError(ctx.path, "unknown step type \"" + tag + "\"");
    }
    return it->second(doc, ctx);
}

TypeRegistry TypeRegistry::with_builtins()
{
    using namespace schema;
    TypeRegistry r;

    r.register_action_type("TextAction", [](const Json& d, const ReadContext& c) {
        return make_action<TextAction>(require_string(d, "text", c));
    });
    r.register_action_type("SubQuestionAction", [](const Json& d, const ReadContext& c) {
        return make_action<SubQuestionAction>(require_string(d, "sub_question", c));
    });
    r.register_action_type("EnvAction", [](const Json& d, const ReadContext& c) {
        return make_action<EnvAction>(require_string(d, "command", c));
    });
    r.register_action_type("ToolAction", [](const Json& d, const ReadContext& c) {
        const Json& args = require_field(d, "arguments", c);
        if (!args.is_object()) {
            throw SchemaError(c.at("arguments").path, "expected an object");
        }
        const Json& fin = require_field(d, "is_finish", c);
        if (!fin.is_boolean()) {
            throw SchemaError(c.at("is_finish").path, "expected a boolean");
        }
        return make_action<ToolAction>(require_string(d, "tool_name", c), args, fin.get<bool>());
    });

    r.register_step_type("ConcatStep", [](const Json& d, const ReadContext& c) {
        auto ac = c.at("action");
        return make_step<ConcatStep>(ac.types.read_action(require_field(d, "action", c), ac));
    });
    r.register_step_type("SubQAStep", [](const Json& d, const ReadContext& c) {
        return make_step<SubQAStep>(require_string(d, "sub_question", c), require_string(d, "sub_answer", c));
    });
    r.register_step_type("EnvStep", [](const Json& d, const ReadContext& c) {
        return make_step<EnvStep>(require_string(d, "action", c), optional_string(d, "next_state", c),
                                  optional_string(d, "error", c));
    });
    r.register_step_type("ToolStep", [](const Json& d, const ReadContext& c) {
        auto ac = c.at("action");
        Action a = ac.types.read_action(require_field(d, "action", c), ac);
        auto tool = std::dynamic_pointer_cast<const ToolAction>(a);
        if (!tool) {
            throw SchemaError(ac.path, "ToolStep requires a ToolAction");
        }
        return make_step<ToolStep>(require_string(d, "thought", c), tool, optional_string(d, "observation", c));
    });

    for (auto k : {StateKind::trajectory, StateKind::env, StateKind::tool, StateKind::concat}) {
        r.claim(std::string(state_tag(k)));
    }
    r.claim("SearchNode");
    r.claim("SearchTree");
    return r;
}

TypeRegistry& default_type_registry()
{
    static TypeRegistry registry = TypeRegistry::with_builtins();
    return registry;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

Json serialize_action(const Action& action)
{
    Json j = action->fields();
    j[std::string(kTypeField)] = std::string(action->type_tag());
    return j;
}

Json serialize_step(const Step& step)
{
    Json j = step->fields();
    j[std::string(kTypeField)] = std::string(step->type_tag());
    return j;
}

Json serialize_state(const State& state)
{
    Json steps = Json::array();
    for (const auto& s : state.steps()) {
        steps.push_back(serialize_step(s));
    }
    return Json{{std::string(kTypeField), std::string(state_tag(state.kind()))},
                {"init_state", state.init_render()},
                {"query", state.query()},
                {"steps", std::move(steps)}};
}

Action deserialize_action(const Json& doc, const TypeRegistry& types)
{
    return types.read_action(doc, ReadContext{types, ""});
}

Step deserialize_step(const Json& doc, const TypeRegistry& types)
{
    return types.read_step(doc, ReadContext{types, ""});
}

State deserialize_state(const Json& doc, const TypeRegistry& types)
{
    ReadContext ctx{types, ""};
    std::string tag = schema::require_tag(doc, ctx);
    auto kind = state_kind_from_tag(tag);
    if (!kind) {
        throw SchemaError(ctx.path, "unknown state type \"" + tag + "\"");
    }
    const Json& steps = schema::require_field(doc, "steps", ctx);
    if (!steps.is_array()) {
        throw SchemaError("steps", "expected an array");
    }
    std::vector<Step> out;
    out.reserve(steps.size());
    auto sctx = ctx.at("steps");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        out.push_back(types.read_step(steps[i], sctx.index(i)));
    }
    // Checkpoint files keep the query beside the state, so it may be absent here.
    return State(*kind, schema::optional_string(doc, "query", ctx).value_or(""),
                 schema::require_string(doc, "init_state", ctx), std::move(out));
}

std::string dump_json(const Json& doc)
{
    return doc.dump(2, ' ', false, Json::error_handler_t::strict);
}

// ---------------------------------------------------------------------------
// Tree
// ---------------------------------------------------------------------------

Tree Tree::from_nodes(std::vector<Node> nodes)
{
    Tree t;
    t.nodes_ = std::move(nodes);
    t.check_well_formed();
    return t;
}

NodeId Tree::add_root(State state)
{
    if (!nodes_.empty()) {
        throw std::logic_error("tree already has a root");
    }
    Node n;
    n.id = 0;
    n.state = std::move(state);
    nodes_.push_back(std::move(n));
    return 0;
}

NodeId Tree::add_child(NodeId parent, State state, double reward)
{
    const NodeId id = static_cast<NodeId>(nodes_.size());
    Node& p = node(parent);
    Node n;
    n.id = id;
    n.parent_id = parent;
    n.depth = p.depth + 1;
    n.state = std::move(state);
    n.reward = reward;
    p.child_ids.push_back(id);
    nodes_.push_back(std::move(n));
    return id;
}

const Node& Tree::node(NodeId id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::out_of_range("node id " + std::to_string(id) + " out of range");
    }
    return nodes_[static_cast<std::size_t>(id)];
}

Node& Tree::node(NodeId id)
{
    return const_cast<Node&>(std::as_const(*this).node(id));
}

std::vector<NodeId> Tree::path_to(NodeId id) const
{
    std::vector<NodeId> path;
    std::optional<NodeId> cur = id;
    while (cur) {
        path.push_back(*cur);
        cur = node(*cur).parent_id;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

void Tree::check_well_formed() const
{
    int roots = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        const std::string where = "nodes[" + std::to_string(i) + "]";
        if (n.id != static_cast<NodeId>(i)) {
            throw SchemaError(where, "id does not match position");
        }
        if (!n.parent_id) {
            ++roots;
            if (n.depth != 0) {
                throw SchemaError(where, "root depth must be 0");
            }
        } else {
            if (*n.parent_id < 0 || *n.parent_id >= n.id) {
                throw SchemaError(where, "parent id must be smaller than child id");
            }
            const Node& p = nodes_[static_cast<std::size_t>(*n.parent_id)];
            if (std::find(p.child_ids.begin(), p.child_ids.end(), n.id) == p.child_ids.end()) {
                throw SchemaError(where, "parent does not list this node as a child");
            }
            if (n.depth != p.depth + 1) {
                throw SchemaError(where, "depth must be parent depth + 1");
            }
        }
        std::set<NodeId> seen;
        for (NodeId c : n.child_ids) {
            if (c <= n.id || static_cast<std::size_t>(c) >= nodes_.size()) {
                throw SchemaError(where, "child id out of order or range");
            }
            if (!seen.insert(c).second) {
                throw SchemaError(where, "duplicate child id");
            }
            if (nodes_[static_cast<std::size_t>(c)].parent_id != n.id) {
                throw SchemaError(where, "child does not point back to this node");
            }
        }
    }
    if (!nodes_.empty() && roots != 1) {
        throw SchemaError("nodes", "tree must have exactly one root");
    }
}

Json serialize_node(const Node& n)
{
    return Json{{std::string(kTypeField), "SearchNode"},
                {"id", n.id},
                {"parent_id", n.parent_id ? Json(*n.parent_id) : Json(nullptr)},
                {"child_ids", n.child_ids},
                {"state", serialize_state(n.state)},
                {"reward", n.reward},
                {"value_sum", n.value_sum},
                {"visits", n.visits},
                {"simulations", n.simulations},
                {"depth", n.depth},
                {"is_terminal", n.is_terminal},
                {"goal_reached", n.goal_reached}};
}

namespace {

template <class T>
T read_number(const Json& doc, std::string_view key, const ReadContext& ctx)
{
    const Json& v = schema::require_field(doc, key, ctx);
    if (!v.is_number()) {
        throw SchemaError(ctx.at(key).path, "expected a number");
    }
    return v.get<T>();
}

bool read_bool(const Json& doc, std::string_view key, const ReadContext& ctx)
{
    const Json& v = schema::require_field(doc, key, ctx);
    if (!v.is_boolean()) {
        throw SchemaError(ctx.at(key).path, "expected a boolean");
    }
    return v.get<bool>();
}

Node read_node(const Json& doc, const ReadContext& ctx)
{
    if (schema::require_tag(doc, ctx) != "SearchNode") {
        throw SchemaError(ctx.path, "expected SearchNode");
    }
    Node n;
    n.id = read_number<NodeId>(doc, "id", ctx);
    const Json& parent = schema::require_field(doc, "parent_id", ctx);
    if (!parent.is_null()) {
        if (!parent.is_number_integer()) {
            throw SchemaError(ctx.at("parent_id").path, "expected an integer or null");
        }
        n.parent_id = parent.get<NodeId>();
    }
    const Json& kids = schema::require_field(doc, "child_ids", ctx);
    if (!kids.is_array()) {
        throw SchemaError(ctx.at("child_ids").path, "expected an array");
    }
    for (const auto& k : kids) {
        n.child_ids.push_back(k.get<NodeId>());
    }
    try {
        n.state = deserialize_state(schema::require_field(doc, "state", ctx), ctx.types);
    } catch (const SchemaError& e) {
        throw SchemaError(ctx.at("state").path + (e.path().empty() ? "" : "." + e.path()), e.what());
    }
    n.reward = read_number<double>(doc, "reward", ctx);
    n.value_sum = read_number<double>(doc, "value_sum", ctx);
    n.visits = read_number<int>(doc, "visits", ctx);
    n.simulations = read_number<int>(doc, "simulations", ctx);
    n.depth = read_number<int>(doc, "depth", ctx);
    n.is_terminal = read_bool(doc, "is_terminal", ctx);
    n.goal_reached = read_bool(doc, "goal_reached", ctx);
    return n;
}

}  // namespace

Node deserialize_node(const Json& doc, const TypeRegistry& types)
{
    return read_node(doc, ReadContext{types, ""});
}

Json serialize_tree(const Tree& tree)
{
    Json nodes = Json::array();
    for (const auto& n : tree.nodes()) {
        nodes.push_back(serialize_node(n));
    }
    return Json{{std::string(kTypeField), "SearchTree"}, {"nodes", std::move(nodes)}};
}

Tree deserialize_tree(const Json& doc, const TypeRegistry& types)
{
    ReadContext ctx{types, ""};
    if (schema::require_tag(doc, ctx) != "SearchTree") {
        throw SchemaError("", "expected SearchTree");
    }
    const Json& nodes = schema::require_field(doc, "nodes", ctx);
    if (!nodes.is_array()) {
        throw SchemaError("nodes", "expected an array");
    }
    std::vector<Node> out;
    auto nctx = ctx.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        out.push_back(read_node(nodes[i], nctx.index(i)));
    }
    return Tree::from_nodes(std::move(out));
}

}  // namespace arbor
