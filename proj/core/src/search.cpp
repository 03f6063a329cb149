#include "arbor/search.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <map>

namespace arbor {

// ---------------------------------------------------------------------------
// SearchConfig
// ---------------------------------------------------------------------------

void SearchConfig::validate() const
{
    auto positive = [](int v, const char* name) {
        if (v < 1) {
            throw std::invalid_argument(std::string(name) + " must be a positive integer");
        }
    };
    positive(n_actions, "n_actions");
    positive(n_iterations, "n_iterations");
    positive(max_depth, "max_depth");
    positive(rollout_depth, "rollout_depth");
    if (beam_width) {
        positive(*beam_width, "beam_width");
    }
    if (n_terminate) {
        positive(*n_terminate, "n_terminate");
    }
    if (bn_threshold && (*bn_threshold < 0.0 || *bn_threshold > 1.0)) {
        throw std::invalid_argument("bn_threshold must lie in [0, 1]");
    }
    if (runtime_limit_s && *runtime_limit_s <= 0.0) {
        throw std::invalid_argument("runtime_limit_s must be positive");
    }
    if (uct_c < 0.0) {
        throw std::invalid_argument("uct_c must be non-negative");
    }
}

Json SearchConfig::to_json() const
{
    Json j{{"n_actions", n_actions},
           {"n_iterations", n_iterations},
           {"max_depth", max_depth},
           {"rollout_depth", rollout_depth},
           {"beam_width", effective_beam_width()},
           {"uct_c", uct_c},
           {"early_terminate", early_terminate},
           {"temperature", {{"base", temperature.base}, {"step", temperature.step}, {"cap", temperature.cap}}}};
    j["bn_threshold"] = bn_threshold ? Json(*bn_threshold) : Json(nullptr);
    j["n_terminate"] = n_terminate ? Json(*n_terminate) : Json(nullptr);
    j["runtime_limit_s"] = runtime_limit_s ? Json(*runtime_limit_s) : Json(nullptr);
    return j;
}

SearchConfig SearchConfig::from_json(const Json& j)
{
    SearchConfig c;
    auto get_int = [&](const char* k, int& out) {
        if (auto it = j.find(k); it != j.end() && it->is_number_integer()) {
            out = it->get<int>();
        }
    };
    get_int("n_actions", c.n_actions);
    get_int("n_iterations", c.n_iterations);
    get_int("max_depth", c.max_depth);
    get_int("rollout_depth", c.rollout_depth);
    if (auto it = j.find("beam_width"); it != j.end() && it->is_number_integer()) {
        c.beam_width = it->get<int>();
    }
    if (auto it = j.find("uct_c"); it != j.end() && it->is_number()) {
        c.uct_c = it->get<double>();
    }
    if (auto it = j.find("early_terminate"); it != j.end() && it->is_boolean()) {
        c.early_terminate = it->get<bool>();
    }
    if (auto it = j.find("bn_threshold"); it != j.end() && it->is_number()) {
        c.bn_threshold = it->get<double>();
    }
    if (auto it = j.find("n_terminate"); it != j.end() && it->is_number_integer()) {
        c.n_terminate = it->get<int>();
    }
    if (auto it = j.find("runtime_limit_s"); it != j.end() && it->is_number()) {
        c.runtime_limit_s = it->get<double>();
    }
    if (auto it = j.find("temperature"); it != j.end() && it->is_object()) {
        c.temperature.base = it->value("base", c.temperature.base);
        c.temperature.step = it->value("step", c.temperature.step);
        c.temperature.cap = it->value("cap", c.temperature.cap);
        c.temperature.current = c.temperature.base;
    }
    return c;
}

// ---------------------------------------------------------------------------
// CiT gate
// ---------------------------------------------------------------------------

CitDecision cit_gate(const State& state, const CitEvaluator& evaluator, std::optional<double> bn_threshold,
                     const WarningSink& warn)
{
    if (!bn_threshold) {
        return CitDecision::branch;
    }
    if (*bn_threshold <= 0.0) {
        return CitDecision::chain;
    }
    try {
        const double score = evaluator(state);
        return score >= *bn_threshold ? CitDecision::branch : CitDecision::chain;
    } catch (const std::exception& e) {
        if (warn) {
            warn(std::string("branching evaluator failed, branching: ") + e.what());
        }
        return CitDecision::branch;
    }
}

double steady_seconds()
{
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

SearchContext SearchContext::from(Components& c, Task task, SearchConfig config)
{
    SearchContext ctx;
    ctx.task = std::move(task);
    ctx.policy = c.policy.get();
    ctx.transition = c.transition.get();
    ctx.reward = c.reward.get();
    ctx.tracker = c.tracker;
    ctx.config = std::move(config);
    return ctx;
}

// ---------------------------------------------------------------------------
// SearchSession
// ---------------------------------------------------------------------------

SearchSession::SearchSession(SearchContext ctx) : ctx_(std::move(ctx))
{
    if (!ctx_.policy || !ctx_.transition || !ctx_.reward) {
        throw std::invalid_argument("search needs a policy, a transition and a reward model");
    }
    if (!ctx_.tracker) {
        ctx_.tracker = std::make_shared<PhaseTracker>();
    }
    if (!ctx_.clock) {
        ctx_.clock = steady_seconds;
    }
    ctx_.config.validate();
    started_ = ctx_.clock();
}

NodeId SearchSession::root()
{
    if (tree_.empty()) {
        const NodeId id = tree_.add_root(ctx_.transition->init_state(ctx_.task));
        const GoalStatus g = ctx_.transition->goal_check(ctx_.task, tree_.node(id).state);
        Node& n = tree_.node(id);
        n.is_terminal = g.done;
        n.goal_reached = g.success;
        if (g.done) {
            terminals_.push_back(id);
            if (g.success) {
                first_goal_ = id;
            }
        }
    }
    return 0;
}

PhaseScope SearchSession::phase(Phase phase, int depth)
{
    return PhaseScope(*ctx_.tracker, PhaseContext{phase, iteration_, depth, ctx_.task.index});
}

std::vector<NodeId> SearchSession::expand(NodeId id, int n, Phase phase_kind)
{
    check_time();
    std::vector<NodeId> out;
    if (enough_terminals()) {
        return out;
    }
    const int depth = tree_.node(id).depth;
    auto scope = phase(phase_kind, depth);
    // Copy: add_child may reallocate the node vector.
    const State parent = tree_.node(id).state;
    ++policy_calls_;
    std::vector<Action> actions = ctx_.policy->get_actions(parent, n, ctx_.task);
    for (const Action& action : actions) {
        check_time();
        Step step = ctx_.transition->step(parent, action, ctx_.task);
        const double reward = std::clamp(ctx_.reward->score(parent, step, ctx_.task), 0.0, 1.0);
        State next = parent.with_step(std::move(step));
        const GoalStatus g = ctx_.transition->goal_check(ctx_.task, next);
        const NodeId child = tree_.add_child(id, std::move(next), reward);
        Node& c = tree_.node(child);
        c.goal_reached = g.success;
        c.is_terminal = g.done || g.success || c.depth >= ctx_.config.max_depth;
        if (c.is_terminal) {
            terminals_.push_back(child);
        }
        if (g.success && !first_goal_) {
            first_goal_ = child;
        }
        out.push_back(child);
        if (enough_terminals()) {
            break;
        }
    }
    return out;
}

double SearchSession::default_branch_score(NodeId id) const
{
    const Node& n = tree_.node(id);
    if (n.child_ids.empty()) {
        return n.reward;
    }
    double best = 0.0;
    for (NodeId c : n.child_ids) {
        best = std::max(best, tree_.node(c).reward);
    }
    return best;
}

int SearchSession::branching_width(NodeId id)
{
    CitEvaluator eval = ctx_.cit_evaluator;
    if (!eval) {
        eval = [this, id](const State&) { return default_branch_score(id); };
    }
    const auto decision = cit_gate(tree_.node(id).state, eval, ctx_.config.bn_threshold,
                                   [this](const std::string& m) { warn(m); });
    return decision == CitDecision::branch ? ctx_.config.n_actions : 1;
}

void SearchSession::complete_iteration(int iteration)
{
    iterations_ = iteration + 1;
    if (ctx_.sink) {
        ctx_.sink->on_iteration(ctx_.task.index, iteration, tree_);
    }
}

void SearchSession::check_time() const
{
    if (ctx_.config.runtime_limit_s && ctx_.clock() - started_ > *ctx_.config.runtime_limit_s) {
        throw RuntimeLimitReached();
    }
}

bool SearchSession::enough_terminals() const noexcept
{
    return ctx_.config.n_terminate && static_cast<int>(terminals_.size()) >= *ctx_.config.n_terminate;
}

bool SearchSession::should_stop() const noexcept
{
    return enough_terminals() || (ctx_.config.early_terminate && first_goal_);
}

void SearchSession::warn(const std::string& message) const
{
    if (ctx_.warn) {
        ctx_.warn(message);
    }
}

namespace {

// Greedy descent by mean value, falling back to reward for unvisited children.
NodeId greedy_leaf(const Tree& tree)
{
    NodeId cur = 0;
    while (tree.node(cur).expanded()) {
        const auto& kids = tree.node(cur).child_ids;
        NodeId best = kids.front();
        auto key = [&](NodeId k) {
            const Node& n = tree.node(k);
            return std::pair(n.visits > 0 ? n.mean_value() : -1.0, n.reward);
        };
        for (NodeId k : kids) {
            if (key(k) > key(best)) {
                best = k;
            }
        }
        cur = best;
    }
    return cur;
}

NodeId default_best(const SearchSession& s)
{
    if (s.first_goal()) {
        return *s.first_goal();
    }
    const Tree& tree = s.tree();
    if (!s.terminals().empty()) {
        NodeId best = s.terminals().front();
        for (NodeId t : s.terminals()) {
            if (tree.node(t).reward > tree.node(best).reward) {
                best = t;
            }
        }
        return best;
    }
    return greedy_leaf(tree);
}

}  // namespace

SearchResult run_search(TreeSearch& engine, SearchContext ctx)
{
    Transition* transition = ctx.transition;
    const std::optional<int> n_terminate = ctx.config.n_terminate;
    SearchSession session(std::move(ctx));
    SearchResult result;
    try {
        session.root();
        engine.search(session);
    } catch (const RuntimeLimitReached& e) {
        result.partial = true;
        result.error = e.what();
    } catch (const EmptyPolicyError& e) {
        result.partial = true;
        result.error = e.what();
        session.warn(e.what());
    }
    result.iterations = session.iterations();
    result.policy_calls = session.policy_calls();
    result.terminals = session.terminals();
    result.terminated_early = session.goal_found() && session.config().early_terminate;
    if (!session.tree().empty()) {
        const NodeId best = session.best().value_or(default_best(session));
        result.best_path = session.tree().path_to(best);
        const State& final_state = session.tree().node(best).state;
        result.success = transition->goal_check(session.task(), final_state).success;
        if (n_terminate && !result.terminals.empty()) {
            try {
                result.answer = to_ensemble(session.tree(), result.terminals, *transition);
            } catch (const NoAnswerError&) {
                result.answer = transition->extract_answer(final_state);
            }
        } else {
            result.answer = transition->extract_answer(final_state);
        }
    }
    result.tree = std::move(session.tree());
    return result;
}

// ---------------------------------------------------------------------------
// MCTS
// ---------------------------------------------------------------------------

NodeId uct_select(const Tree& tree, NodeId node, double c)
{
    const Node& parent = tree.node(node);
    if (parent.child_ids.empty()) {
        throw std::invalid_argument("uct_select on a node without children");
    }
    const double log_n = std::log(static_cast<double>(std::max(parent.visits, 1)));
    NodeId best = parent.child_ids.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (NodeId k : parent.child_ids) {
        const Node& ch = tree.node(k);
        const double value = ch.visits > 0 ? ch.mean_value() : ch.reward;
        const double score = value + c * std::sqrt(log_n / std::max(ch.visits, 1));
        if (score > best_score) {
            best = k;
            best_score = score;
        }
    }
    return best;
}

void MctsSearch::search(SearchSession& s)
{
    const SearchConfig& cfg = s.config();
    Tree& tree = s.tree();
    const NodeId root = s.root();
    const int rollout_limit = std::min(cfg.rollout_depth, cfg.max_depth);

    for (int it = 0; it < cfg.n_iterations; ++it) {
        s.check_time();
        s.set_iteration(it);

        std::vector<NodeId> path{root};
        NodeId cur = root;
        {
            auto scope = s.phase(Phase::selection, 0);
            while (tree.node(cur).expanded() && !tree.node(cur).is_terminal) {
                cur = uct_select(tree, cur, cfg.uct_c);
                path.push_back(cur);
            }
        }

        if (!tree.node(cur).is_terminal && !s.enough_terminals()) {
            auto kids = s.expand(cur, s.branching_width(cur), Phase::expansion);
            if (!kids.empty()) {
                cur = uct_select(tree, cur, cfg.uct_c);
                path.push_back(cur);
            }
        }

        while (!tree.node(cur).is_terminal && tree.node(cur).depth < rollout_limit && !s.should_stop()) {
            if (!tree.node(cur).expanded()) {
                if (s.expand(cur, s.branching_width(cur), Phase::simulation).empty()) {
                    break;
                }
            }
            const auto& kids = tree.node(cur).child_ids;
            NodeId best = kids.front();
            for (NodeId k : kids) {
                if (tree.node(k).reward > tree.node(best).reward) {
                    best = k;
                }
            }
            cur = best;
            path.push_back(cur);
        }

        {
            auto scope = s.phase(Phase::backprop, tree.node(cur).depth);
            const Node& end = tree.node(cur);
            const double value =
                s.transition().goal_grounded() ? (end.goal_reached ? 1.0 : 0.0) : end.reward;
            for (NodeId id : path) {
                Node& n = tree.node(id);
                n.visits += 1;
                n.value_sum += value;
            }
            tree.node(cur).simulations += 1;
        }

        s.complete_iteration(it);
        if (s.should_stop()) {
            break;
        }
    }

    if (s.first_goal()) {
        s.set_best(*s.first_goal());
    } else {
        s.set_best(greedy_leaf(tree));
    }
}

// ---------------------------------------------------------------------------
// BFS
// ---------------------------------------------------------------------------

void BfsSearch::search(SearchSession& s)
{
    const SearchConfig& cfg = s.config();
    Tree& tree = s.tree();
    std::vector<NodeId> frontier{s.root()};
    if (tree.node(0).is_terminal) {
        return;
    }
    const std::size_t beam = static_cast<std::size_t>(cfg.effective_beam_width());

    for (int level = 0; level < cfg.max_depth && !frontier.empty(); ++level) {
        s.check_time();
        s.set_iteration(level);
        std::vector<NodeId> next;
        for (NodeId id : frontier) {
            if (s.should_stop()) {
                break;
            }
            const int width = s.branching_width(id);
            for (NodeId k : s.expand(id, width, Phase::expansion)) {
                if (!tree.node(k).is_terminal) {
                    next.push_back(k);
                }
            }
        }
        std::stable_sort(next.begin(), next.end(), [&](NodeId a, NodeId b) {
            const double ra = tree.node(a).reward, rb = tree.node(b).reward;
            return ra != rb ? ra > rb : a < b;
        });
        if (next.size() > beam) {
            next.resize(beam);
        }
        s.complete_iteration(level);
        if (s.should_stop()) {
            break;
        }
        frontier = std::move(next);
    }
}

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

std::string majority_vote(const std::vector<std::string>& answers)
{
    if (answers.empty()) {
        throw NoAnswerError("no terminal answers to aggregate");
    }
    std::map<std::string, int> counts;
    for (const auto& a : answers) {
        ++counts[a];
    }
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) {
            best = it;
        }
    }
    return best->first;
}

std::string to_ensemble(const Tree& tree, const std::vector<NodeId>& terminals, const Transition& transition)
{
    std::vector<std::string> answers;
    for (NodeId t : terminals) {
        if (auto a = transition.extract_answer(tree.node(t).state)) {
            answers.push_back(*a);
        }
    }
    return majority_vote(answers);
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

ChainResult run_chain(Policy& policy, Transition& transition, PhaseTracker& tracker, const Task& task,
                      int max_steps, std::optional<State> start, const StepCallback& on_step, Phase phase)
{
    ChainResult r;
    r.state = start ? std::move(*start) : transition.init_state(task);
    GoalStatus g = transition.goal_check(task, r.state);
    while (!g.done && static_cast<int>(r.state.size()) < max_steps) {
        PhaseScope scope(tracker, PhaseContext{phase, static_cast<int>(r.state.size()),
                                               static_cast<int>(r.state.size()), task.index});
        ++r.policy_calls;
        const std::vector<Action> actions = policy.get_actions(r.state, 1, task);
        r.state.append(transition.step(r.state, actions.front(), task));
        g = transition.goal_check(task, r.state);
        if (on_step) {
            on_step(r.state);
        }
    }
    r.finished = g.done;
    r.success = g.success;
    r.answer = transition.extract_answer(r.state);
    return r;
}

ChainResult react_chain(Components& c, const ResourceBundle& tools, const Task& task, int max_steps,
                        std::optional<State> start, const StepCallback& on_step)
{
    if (tools.tools().empty()) {
        throw std::invalid_argument("the tool-use chain needs at least one tool");
    }
    return run_chain(*c.policy, *c.transition, *c.tracker, task, max_steps, std::move(start), on_step);
}

ChainResult env_chain(Components& c, const Task& task, int max_steps, std::optional<State> start,
                      const StepCallback& on_step)
{
    return run_chain(*c.policy, *c.transition, *c.tracker, task, max_steps, std::move(start), on_step);
}

// ---------------------------------------------------------------------------
// Rollout-and-judge reward
// ---------------------------------------------------------------------------

std::string render_trajectory(const State& state)
{
    std::string out;
    for (const auto& s : state.steps()) {
        out += s->render() + "\n";
    }
    return out.empty() ? "(no steps)\n" : out;
}

double lats_reward(const State& state, Policy& policy, Transition& transition, PhaseTracker& tracker,
                   const Task& task, int max_steps, const std::function<std::string(const State&)>& judge,
                   const WarningSink& warn)
{
    State completed = state;
    if (!transition.goal_check(task, state).done) {
        try {
            completed = run_chain(policy, transition, tracker, task, static_cast<int>(state.size()) + max_steps,
                                  state, {}, Phase::simulation)
                            .state;
        } catch (const EmptyPolicyError& e) {
            if (warn) {
                warn(std::string("completion stopped early: ") + e.what());
            }
        }
    }
    const PhaseContext outer = tracker.current();
    PhaseScope scope(tracker, PhaseContext{Phase::judge, outer.iteration, outer.depth, task.index});
    const std::string text = judge(completed);
    if (auto s = parse_score(text)) {
        return *s;
    }
    if (warn) {
        warn("unparseable judge output; scoring 0");
    }
    return 0.0;
}

LatsReward::LatsReward(const ComponentDeps& deps)
    : RewardModel(ComponentKind::reward, "lats", TaskType::tool_use, deps), tracker_(deps.tracker)
{
    max_steps_ = option_int("rollout_steps", 3);
}

void LatsReward::bind(Policy& policy, Transition& transition)
{
    policy_ = &policy;
    transition_ = &transition;
}

double LatsReward::score(const State& state, const Step& step, const Task& task)
{
    if (!policy_ || !transition_) {
        throw std::logic_error("rollout reward used before bind()");
    }
    auto judge = [&](const State& done) {
        GenerationRequest req =
            request({{"question", task.question}, {"trajectory", render_trajectory(done)}});
        req.temperature = 0.0;
        return llm_.generate(req).text;
    };
    return lats_reward(state.with_step(step), *policy_, *transition_, *tracker_, task, max_steps_, judge,
                       [this](const std::string& m) { warn(m); });
}

}  // namespace arbor
