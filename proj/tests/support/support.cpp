#include "support.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace arbor::testing {

TempDir::TempDir()
{
    std::string tmpl = (fs::temp_directory_path() / "arbor-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) {
        throw std::runtime_error("mkdtemp failed");
    }
    path_ = tmpl;
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string slurp(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + file.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& file, const std::string& text)
{
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    out << text;
}

std::set<std::string> list_files(const fs::path& root)
{
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out.insert(fs::relative(e.path(), root).generic_string());
        }
    }
    return out;
}

std::string random_text(std::mt19937_64& rng)
{
    static const std::vector<std::string> pieces{"a", "Z", "7", " ", "\n", "\"", "\\", "{", "}", "/", "\t",
                                                 "\u00e9", "\u4e2d", "\U0001F600", "stack", "h1.", ":"};
    std::uniform_int_distribution<std::size_t> len(0, 12), pick(0, pieces.size() - 1);
    std::string s;
    for (std::size_t n = len(rng); n > 0; --n) {
        s += pieces[pick(rng)];
    }
    return s;
}

namespace {

Action random_action(std::mt19937_64& rng)
{
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
        return make_action<TextAction>(random_text(rng));
    case 1:
        return make_action<SubQuestionAction>(random_text(rng));
    case 2:
        return make_action<EnvAction>(random_text(rng));
    default: {
        Json args = Json::object();
        for (int i = std::uniform_int_distribution<int>(0, 3)(rng); i > 0; --i) {
            switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
            case 0:
                args[random_text(rng)] = random_text(rng);
                break;
            case 1:
                args[random_text(rng)] = std::uniform_int_distribution<int>(-50, 50)(rng);
                break;
            default:
                args[random_text(rng)] = Json::array({true, nullptr, 1.5});
            }
        }
        return make_action<ToolAction>(random_text(rng), args, std::bernoulli_distribution(0.3)(rng));
    }
    }
}

std::optional<std::string> maybe_text(std::mt19937_64& rng)
{
    if (std::bernoulli_distribution(0.5)(rng)) {
        return random_text(rng);
    }
    return std::nullopt;
}

}  // namespace

State random_state(std::mt19937_64& rng)
{
    const auto kind = static_cast<StateKind>(std::uniform_int_distribution<int>(0, 3)(rng));
    std::vector<Step> steps;
    for (int i = std::uniform_int_distribution<int>(0, 6)(rng); i > 0; --i) {
        switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
        case 0:
            steps.push_back(make_step<ConcatStep>(random_action(rng)));
            break;
        case 1:
            steps.push_back(make_step<SubQAStep>(random_text(rng), random_text(rng)));
            break;
        case 2:
            steps.push_back(make_step<EnvStep>(random_text(rng), random_text(rng)));
            break;
        case 3:
            steps.push_back(make_step<EnvStep>(random_text(rng), maybe_text(rng),
                                               "Validation failed after 1 retries"));
            break;
        case 4: {
            const bool finish = std::bernoulli_distribution(0.5)(rng);
            auto a = finish ? ToolAction::finish(random_text(rng))
                            : std::make_shared<const ToolAction>(random_text(rng), Json{{"query", random_text(rng)}});
            steps.push_back(make_step<ToolStep>(random_text(rng), a, maybe_text(rng)));
            break;
        }
        default:
            steps.push_back(make_step<ConcatStep>(make_action<TextAction>(random_text(rng))));
        }
    }
    return State(kind, random_text(rng), random_text(rng), std::move(steps));
}

// ---------------------------------------------------------------------------
// Toy trees
// ---------------------------------------------------------------------------

std::string toy_key(const State& state)
{
    std::string key;
    for (const auto& s : state.steps()) {
        if (!key.empty()) {
            key += "/";
        }
        key += s->render();
    }
    return key;
}

namespace {

std::string child_key(const std::string& parent, const std::string& label)
{
    return parent.empty() ? label : parent + "/" + label;
}

const ToyNode& toy_node(const ToyTree* tree, const std::string& key)
{
    auto it = tree->find(key);
    if (it == tree->end()) {
        throw std::out_of_range("toy tree has no node " + key);
    }
    return it->second;
}

}  // namespace

ToyPolicy::ToyPolicy(const ComponentDeps& deps, const ToyTree* tree)
    : Policy(ComponentKind::policy, "toy", std::nullopt, deps), tree_(tree)
{
}

std::vector<Action> ToyPolicy::get_actions(const State& state, int n, const Task&)
{
    ++calls;
    const ToyNode& node = toy_node(tree_, toy_key(state));
    std::vector<Action> out;
    for (const auto& c : node.children) {
        if (static_cast<int>(out.size()) == n) {
            break;
        }
        out.push_back(make_action<TextAction>(c));
    }
    if (out.empty()) {
        throw EmptyPolicyError("toy leaf");
    }
    return out;
}

ToyTransition::ToyTransition(const ComponentDeps& deps, const ToyTree* tree)
    : Transition(ComponentKind::transition, "toy", std::nullopt, deps), tree_(tree)
{
}

State ToyTransition::init_state(const Task& task) const
{
    return State(StateKind::concat, task.question, task.question);
}

Step ToyTransition::step(const State&, const Action& action, const Task&)
{
    return make_step<ConcatStep>(action);
}

GoalStatus ToyTransition::goal_check(const Task&, const State& state) const
{
    const ToyNode& n = toy_node(tree_, toy_key(state));
    return {n.goal || n.children.empty(), n.goal};
}

std::optional<std::string> ToyTransition::extract_answer(const State& state) const
{
    if (state.empty()) {
        return std::nullopt;
    }
    return state.steps().back()->render();
}

ToyReward::ToyReward(const ComponentDeps& deps, const ToyTree* tree)
    : RewardModel(ComponentKind::reward, "toy", std::nullopt, deps), tree_(tree)
{
}

double ToyReward::score(const State& state, const Step& step, const Task&)
{
    return toy_node(tree_, child_key(toy_key(state), step->render())).reward;
}

ToyTree random_toy_tree(std::mt19937_64& rng, int depth, int max_branch)
{
    ToyTree tree;
    std::uniform_int_distribution<int> branch(1, max_branch);
    std::uniform_int_distribution<int> reward(0, 10);
    std::bernoulli_distribution goal(0.2);
    std::bernoulli_distribution stop(0.15);
    std::deque<std::pair<std::string, int>> todo{{"", 0}};
    tree[""] = ToyNode{};
    while (!todo.empty()) {
        auto [key, d] = todo.front();
        todo.pop_front();
        ToyNode& node = tree[key];
        if (d == depth || (d > 0 && stop(rng))) {
            node.goal = goal(rng);
            continue;
        }
        const int k = branch(rng);
        for (int i = 0; i < k; ++i) {
            std::string label(1, static_cast<char>('a' + i));
            label += std::to_string(d + 1);
            node.children.push_back(label);
        }
        const auto kids = node.children;
        for (const auto& label : kids) {
            const std::string ck = child_key(key, label);
            tree[ck].reward = reward(rng) / 10.0;
            todo.emplace_back(ck, d + 1);
        }
    }
    return tree;
}

BeamTrace oracle_beam(const ToyTree& tree, int beam, int max_depth)
{
    BeamTrace trace;
    trace.expanded.resize(static_cast<std::size_t>(max_depth));
    if (tree.at("").goal) {
        trace.goal_found = true;
        return trace;
    }
    struct Cand {
        std::string key;
        double reward;
        int order;
    };
    std::vector<std::string> frontier{""};
    int order = 0;
    for (int d = 0; d < max_depth && !frontier.empty(); ++d) {
        std::vector<Cand> next;
        for (const auto& key : frontier) {
            const ToyNode& n = tree.at(key);
            if (n.children.empty()) {
                continue;
            }
            trace.expanded[d].push_back(key);
            for (const auto& label : n.children) {
                const std::string ck = child_key(key, label);
                const ToyNode& c = tree.at(ck);
                if (c.goal) {
                    trace.goal_found = true;
                }
                const bool terminal = c.goal || c.children.empty() || d + 1 >= max_depth;
                if (!terminal) {
                    next.push_back({ck, c.reward, order});
                }
                ++order;
            }
        }
        std::sort(next.begin(), next.end(), [](const Cand& a, const Cand& b) {
            if (a.reward != b.reward) {
                return a.reward > b.reward;
            }
            return a.order < b.order;
        });
        frontier.clear();
        for (std::size_t i = 0; i < next.size() && static_cast<int>(i) < beam; ++i) {
            frontier.push_back(next[i].key);
        }
    }
    return trace;
}

bool oracle_goal_reachable(const ToyTree& tree, int max_depth)
{
    for (const auto& [key, node] : tree) {
        const int depth = key.empty() ? 0 : static_cast<int>(std::count(key.begin(), key.end(), '/')) + 1;
        if (node.goal && depth <= max_depth) {
            return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Predicate-driven components
// ---------------------------------------------------------------------------

ScriptTransition::ScriptTransition(const ComponentDeps& deps, Goal goal)
    : Transition(ComponentKind::transition, "script", std::nullopt, deps), goal_(std::move(goal))
{
}

State ScriptTransition::init_state(const Task& task) const
{
    return State(StateKind::concat, task.question, task.question);
}

Step ScriptTransition::step(const State&, const Action& action, const Task&)
{
    return make_step<ConcatStep>(action);
}

GoalStatus ScriptTransition::goal_check(const Task&, const State& state) const
{
    return goal_(state);
}

std::optional<std::string> ScriptTransition::extract_answer(const State& state) const
{
    if (state.empty()) {
        return std::nullopt;
    }
    return state.steps().back()->render();
}

ScriptReward::ScriptReward(const ComponentDeps& deps, Fn fn)
    : RewardModel(ComponentKind::reward, "script", std::nullopt, deps), fn_(std::move(fn))
{
}

double ScriptReward::score(const State& state, const Step& step, const Task&)
{
    return fn_(state, step);
}

// ---------------------------------------------------------------------------
// Block-stacking oracle
// ---------------------------------------------------------------------------

namespace {

// World as "what each block rests on": a block letter, 'T' for the table or
// 'H' for the hand.
using World = std::map<char, char>;

World read_world(const std::string& text)
{
    World w;
    std::regex stack_re(R"(stack((?: [A-Z])+))");
    for (std::sregex_iterator it(text.begin(), text.end(), stack_re), end; it != end; ++it) {
        std::string blocks = (*it)[1];
        char below = 'T';
        for (char c : blocks) {
            if (c != ' ') {
                w[c] = below;
                below = c;
            }
        }
    }
    std::smatch m;
    if (std::regex_search(text, m, std::regex(R"(holding: ([A-Z]))"))) {
        w[m[1].str()[0]] = 'H';
    }
    return w;
}

std::vector<std::pair<char, char>> read_goal(const std::string& text)
{
    std::vector<std::pair<char, char>> out;
    std::regex atom(R"(([A-Z]) on (table|[A-Z]))");
    for (std::sregex_iterator it(text.begin(), text.end(), atom), end; it != end; ++it) {
        const std::string below = (*it)[2];
        out.emplace_back((*it)[1].str()[0], below == "table" ? 'T' : below[0]);
    }
    return out;
}

bool clear(const World& w, char b)
{
    return std::none_of(w.begin(), w.end(), [&](const auto& kv) { return kv.second == b; });
}

std::vector<World> successors(const World& w)
{
    std::vector<World> out;
    auto held = std::find_if(w.begin(), w.end(), [](const auto& kv) { return kv.second == 'H'; });
    if (held != w.end()) {
        const char h = held->first;
        World down = w;
        down[h] = 'T';
        out.push_back(down);
        for (const auto& [b, below] : w) {
            if (b != h && below != 'H' && clear(w, b)) {
                World s = w;
                s[h] = b;
                out.push_back(s);
            }
        }
        return out;
    }
    for (const auto& [b, below] : w) {
        if (clear(w, b)) {
            World s = w;
            s[b] = 'H';
            out.push_back(s);
        }
    }
    return out;
}

}  // namespace

std::optional<int> oracle_blocks_distance(const std::string& init_render, const std::string& goal_text,
                                          int max_depth)
{
    const World start = read_world(init_render);
    const auto goal = read_goal(goal_text);
    auto met = [&](const World& w) {
        return std::all_of(goal.begin(), goal.end(), [&](const auto& g) {
            auto it = w.find(g.first);
            return it != w.end() && it->second == g.second;
        });
    };
    std::set<World> seen{start};
    std::vector<World> layer{start};
    for (int d = 0; d <= max_depth; ++d) {
        for (const auto& w : layer) {
            if (met(w)) {
                return d;
            }
        }
        std::vector<World> next;
        for (const auto& w : layer) {
            for (auto& s : successors(w)) {
                if (seen.insert(s).second) {
                    next.push_back(std::move(s));
                }
            }
        }
        layer = std::move(next);
    }
    return std::nullopt;
}

std::string brute_force_mode(const std::vector<std::string>& values)
{
    if (values.empty()) {
        throw std::invalid_argument("empty");
    }
    std::string best;
    long best_count = -1;
    for (const auto& candidate : values) {
        const long count = std::count(values.begin(), values.end(), candidate);
        if (count > best_count || (count == best_count && candidate < best)) {
            best = candidate;
            best_count = count;
        }
    }
    return best;
}

BruteDiversity brute_force_diversity(const std::vector<PolicyCall>& log)
{
    BruteDiversity r;
    long long dup = 0, dup_incorrect = 0, incorrect = 0, correct = 0;
    std::vector<std::string> states;
    for (std::size_t i = 0; i < log.size(); ++i) {
        bool repeated = false;
        for (std::size_t j = 0; j < i && !repeated; ++j) {
            repeated = log[j].state_key == log[i].state_key && log[j].output == log[i].output;
        }
        dup += repeated;
        if (log[i].correct) {
            ++correct;
        } else {
            ++incorrect;
            dup_incorrect += repeated;
        }
        if (std::find(states.begin(), states.end(), log[i].state_key) == states.end()) {
            states.push_back(log[i].state_key);
        }
    }
    const double n = static_cast<double>(log.size());
    r.unique_states = static_cast<long long>(states.size());
    r.duplicate_rate = dup / n;
    r.duplicate_rate_incorrect = incorrect ? static_cast<double>(dup_incorrect) / incorrect : 0.0;
    r.correct_fraction = correct / n;
    r.avg_calls_per_state = n / static_cast<double>(states.size());
    return r;
}

}  // namespace arbor::testing
