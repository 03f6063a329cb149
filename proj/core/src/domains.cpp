#include "arbor/domains.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace arbor {

namespace {

std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.emplace_back(text.substr(pos));
            break;
        }
        out.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

/// Text of the line starting with `label`, without the label.
std::optional<std::string> line_after_label(std::string_view text, std::string_view label)
{
    for (const auto& line : split_lines(text)) {
        const std::string t = trim(line);
        if (t.rfind(label, 0) == 0) {
            return trim(std::string_view(t).substr(label.size()));
        }
    }
    return std::nullopt;
}

/// The `count` lines following the line equal to `header`.
std::optional<std::string> lines_after_header(std::string_view text, std::string_view header, int count)
{
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]) == header) {
            std::string out;
            for (int k = 1; k <= count && i + k < lines.size(); ++k) {
                out += (k > 1 ? "\n" : "") + lines[i + k];
            }
            return out;
        }
    }
    return std::nullopt;
}

bool contains(std::string_view hay, std::string_view needle)
{
    return hay.find(needle) != std::string_view::npos;
}

std::string upper(std::string s)
{
    for (auto& c : s) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return s;
}

std::string lower(std::string s)
{
    for (auto& c : s) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

const DatasetItem* item_for_prompt(const std::vector<DatasetItem>& items, std::string_view prompt)
{
    const DatasetItem* best = nullptr;
    for (const auto& it : items) {
        if (!it.question.empty() && contains(prompt, it.question) &&
            (!best || it.question.size() > best->question.size())) {
            best = &it;
        }
    }
    return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Block stacking
// ---------------------------------------------------------------------------

namespace blocks {

void BlocksState::canonicalize()
{
    stacks.erase(std::remove_if(stacks.begin(), stacks.end(), [](const auto& s) { return s.empty(); }), stacks.end());
    std::sort(stacks.begin(), stacks.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

std::vector<char> BlocksState::blocks() const
{
    std::vector<char> out;
    for (const auto& s : stacks) {
        out.insert(out.end(), s.begin(), s.end());
    }
    if (holding) {
        out.push_back(*holding);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string render(const BlocksState& s)
{
    BlocksState c = s;
    c.canonicalize();
    std::string out;
    for (const auto& st : c.stacks) {
        out += "stack";
        for (char b : st) {
            out += ' ';
            out += b;
        }
        out += " | ";
    }
    out += "holding: ";
    out += c.holding ? std::string(1, *c.holding) : std::string("none");
    return out;
}

BlocksState parse(std::string_view text)
{
    BlocksState s;
    std::set<char> seen;
    auto add_block = [&](const std::string& tok) {
        if (tok.size() != 1 || !std::isupper(static_cast<unsigned char>(tok[0]))) {
            throw std::invalid_argument("bad block name \"" + tok + "\"");
        }
        if (!seen.insert(tok[0]).second) {
            throw std::invalid_argument(std::string("block ") + tok + " appears twice");
        }
        return tok[0];
    };
    bool saw_holding = false;
    std::string rest(text);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        auto bar = rest.find('|', pos);
        const std::string part = trim(std::string_view(rest).substr(pos, bar == std::string::npos ? std::string::npos
                                                                                                  : bar - pos));
        if (part.rfind("stack", 0) == 0) {
            std::istringstream ss(part.substr(5));
            std::vector<char> st;
            std::string tok;
            while (ss >> tok) {
                st.push_back(add_block(tok));
            }
            if (st.empty()) {
                throw std::invalid_argument("empty stack in \"" + std::string(text) + "\"");
            }
            s.stacks.push_back(std::move(st));
        } else if (part.rfind("holding:", 0) == 0) {
            const std::string h = trim(std::string_view(part).substr(8));
            if (h != "none") {
                s.holding = add_block(h);
            }
            saw_holding = true;
        } else {
            throw std::invalid_argument("cannot parse block state part \"" + part + "\"");
        }
        if (bar == std::string::npos) {
            break;
        }
        pos = bar + 1;
    }
    if (!saw_holding) {
        throw std::invalid_argument("block state lacks a holding part");
    }
    s.canonicalize();
    return s;
}

std::vector<GoalAtom> parse_goal(std::string_view text)
{
    static const std::regex atom(R"(^\s*([A-Z])\s+on\s+(table|[A-Z])\s*$)");
    std::vector<GoalAtom> out;
    std::string t(text);
    if (!t.empty() && t.back() == '.') {
        t.pop_back();
    }
    std::size_t pos = 0;
    while (pos <= t.size()) {
        auto comma = t.find(',', pos);
        const std::string part = t.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::smatch m;
        if (!std::regex_match(part, m, atom)) {
            throw std::invalid_argument("bad goal atom \"" + trim(part) + "\"");
        }
        GoalAtom a;
        a.block = m[1].str()[0];
        if (m[2].str() != "table") {
            a.below = m[2].str()[0];
        }
        out.push_back(a);
        if (comma == std::string::npos) {
            break;
        }
        pos = comma + 1;
    }
    return out;
}

std::string render_goal(const std::vector<GoalAtom>& goal)
{
    std::string out;
    for (const auto& a : goal) {
        if (!out.empty()) {
            out += ", ";
        }
        out += std::string(1, a.block) + " on " + (a.below ? std::string(1, *a.below) : std::string("table"));
    }
    return out;
}

bool satisfies(const BlocksState& s, const std::vector<GoalAtom>& goal)
{
    for (const auto& a : goal) {
        bool ok = false;
        for (const auto& st : s.stacks) {
            for (std::size_t i = 0; i < st.size(); ++i) {
                if (st[i] == a.block) {
                    ok = a.below ? (i > 0 && st[i - 1] == *a.below) : i == 0;
                }
            }
        }
        if (!ok) {
            return false;
        }
    }
    return true;
}

namespace {

struct ParsedAction {
    enum Kind { pick_up, put_down, stack, unstack } kind;
    char x = 0;
    char y = 0;
};

std::optional<ParsedAction> parse_action(std::string_view action)
{
    static const std::regex pick(R"(^pick up ([a-z])$)");
    static const std::regex put(R"(^put down ([a-z])$)");
    static const std::regex stk(R"(^stack ([a-z]) on ([a-z])$)");
    static const std::regex unstk(R"(^unstack ([a-z]) from ([a-z])$)");
    const std::string t = normalize_action_text(action);
    std::smatch m;
    auto up = [](const std::ssub_match& g) { return static_cast<char>(std::toupper(g.str()[0])); };
    if (std::regex_match(t, m, pick)) {
        return ParsedAction{ParsedAction::pick_up, up(m[1]), 0};
    }
    if (std::regex_match(t, m, put)) {
        return ParsedAction{ParsedAction::put_down, up(m[1]), 0};
    }
    if (std::regex_match(t, m, stk)) {
        return ParsedAction{ParsedAction::stack, up(m[1]), up(m[2])};
    }
    if (std::regex_match(t, m, unstk)) {
        return ParsedAction{ParsedAction::unstack, up(m[1]), up(m[2])};
    }
    return std::nullopt;
}

const std::vector<char>* stack_with_top(const BlocksState& s, char b)
{
    for (const auto& st : s.stacks) {
        if (st.back() == b) {
            return &st;
        }
    }
    return nullptr;
}

bool has_block(const BlocksState& s, char b)
{
    const auto all = s.blocks();
    return std::find(all.begin(), all.end(), b) != all.end();
}

}  // namespace

std::vector<std::string> legal_actions(const BlocksState& s)
{
    BlocksState c = s;
    c.canonicalize();
    std::vector<std::string> out;
    if (c.holding) {
        const char h = *c.holding;
        out.push_back(std::string("put down ") + h);
        std::vector<char> tops;
        for (const auto& st : c.stacks) {
            tops.push_back(st.back());
        }
        std::sort(tops.begin(), tops.end());
        for (char t : tops) {
            out.push_back(std::string("stack ") + h + " on " + t);
        }
        return out;
    }
    std::vector<std::pair<char, std::string>> moves;
    for (const auto& st : c.stacks) {
        const char t = st.back();
        if (st.size() == 1) {
            moves.emplace_back(t, std::string("pick up ") + t);
        } else {
            moves.emplace_back(t, std::string("unstack ") + t + " from " + st[st.size() - 2]);
        }
    }
    std::sort(moves.begin(), moves.end());
    for (auto& m : moves) {
        out.push_back(std::move(m.second));
    }
    return out;
}

std::optional<std::string> check_action(const BlocksState& s, std::string_view action)
{
    const auto a = parse_action(action);
    if (!a) {
        return "unknown action \"" + std::string(action) +
               "\"; expected pick up X, put down X, stack X on Y or unstack X from Y";
    }
    for (char b : {a->x, a->y}) {
        if (b && !has_block(s, b)) {
            return std::string("no block ") + b;
        }
    }
    switch (a->kind) {
    case ParsedAction::pick_up: {
        if (s.holding) {
            return "hand is not empty";
        }
        const auto* st = stack_with_top(s, a->x);
        if (!st || st->size() != 1) {
            return std::string("block ") + a->x + " is not clear on the table";
        }
        return std::nullopt;
    }
    case ParsedAction::put_down:
        if (s.holding != a->x) {
            return std::string("not holding block ") + a->x;
        }
        return std::nullopt;
    case ParsedAction::stack:
        if (s.holding != a->x) {
            return std::string("not holding block ") + a->x;
        }
        if (a->x == a->y || !stack_with_top(s, a->y)) {
            return std::string("block ") + a->y + " is not clear";
        }
        return std::nullopt;
    case ParsedAction::unstack: {
        if (s.holding) {
            return "hand is not empty";
        }
        const auto* st = stack_with_top(s, a->x);
        if (!st || st->size() < 2 || (*st)[st->size() - 2] != a->y) {
            return std::string("block ") + a->x + " is not clear on top of " + a->y;
        }
        return std::nullopt;
    }
    }
    return "unknown action";
}

BlocksState apply(const BlocksState& s, std::string_view action)
{
    if (auto err = check_action(s, action)) {
        throw std::invalid_argument(*err);
    }
    const auto a = *parse_action(action);
    BlocksState n = s;
    switch (a.kind) {
    case ParsedAction::pick_up:
    case ParsedAction::unstack:
        for (auto& st : n.stacks) {
            if (st.back() == a.x) {
                st.pop_back();
                break;
            }
        }
        n.holding = a.x;
        break;
    case ParsedAction::put_down:
        n.stacks.push_back({a.x});
        n.holding.reset();
        break;
    case ParsedAction::stack:
        for (auto& st : n.stacks) {
            if (st.back() == a.y) {
                st.push_back(a.x);
                break;
            }
        }
        n.holding.reset();
        break;
    }
    n.canonicalize();
    return n;
}

std::optional<int> distance_to_goal(const BlocksState& s, const std::vector<GoalAtom>& goal, int max_depth)
{
    BlocksState start = s;
    start.canonicalize();
    if (satisfies(start, goal)) {
        return 0;
    }
    std::deque<std::pair<BlocksState, int>> queue{{start, 0}};
    std::set<std::string> seen{blocks::render(start)};
    while (!queue.empty()) {
        auto [cur, d] = queue.front();
        queue.pop_front();
        if (d >= max_depth) {
            continue;
        }
        for (const auto& act : legal_actions(cur)) {
            BlocksState next = blocks::apply(cur, act);
            if (!seen.insert(blocks::render(next)).second) {
                continue;
            }
            if (satisfies(next, goal)) {
                return d + 1;
            }
            queue.emplace_back(std::move(next), d + 1);
        }
    }
    return std::nullopt;
}

std::string Instance::question() const
{
    std::string names;
    for (char b : init.blocks()) {
        names += names.empty() ? std::string(1, b) : std::string(" ") + b;
    }
    return "Blocks: " + names + "\nInitial state: " + blocks::render(init) + "\nGoal: " + render_goal(goal);
}

namespace {

BlocksState random_configuration(std::mt19937_64& rng, int n)
{
    std::vector<char> bl;
    for (int i = 0; i < n; ++i) {
        bl.push_back(static_cast<char>('A' + i));
    }
    std::shuffle(bl.begin(), bl.end(), rng);
    BlocksState s;
    std::bernoulli_distribution new_stack(0.45);
    for (char b : bl) {
        if (s.stacks.empty() || new_stack(rng)) {
            s.stacks.push_back({b});
        } else {
            s.stacks.back().push_back(b);
        }
    }
    s.canonicalize();
    return s;
}

}  // namespace

Instance random_instance(std::mt19937_64& rng, int n_blocks)
{
    if (n_blocks < 2 || n_blocks > 26) {
        throw std::invalid_argument("n_blocks must be between 2 and 26");
    }
    for (;;) {
        Instance inst;
        inst.init = random_configuration(rng, n_blocks);
        const BlocksState target = random_configuration(rng, n_blocks);
        for (const auto& st : target.stacks) {
            for (std::size_t i = 1; i < st.size(); ++i) {
                inst.goal.push_back(GoalAtom{st[i], st[i - 1]});
            }
        }
        if (inst.goal.empty()) {
            continue;
        }
        std::sort(inst.goal.begin(), inst.goal.end(), [](const GoalAtom& a, const GoalAtom& b) { return a.block < b.block; });
        if (!satisfies(inst.init, inst.goal)) {
            return inst;
        }
    }
}

BlocksState initial_from_question(std::string_view question)
{
    auto line = line_after_label(question, "Initial state:");
    if (!line) {
        throw std::invalid_argument("question has no \"Initial state:\" line");
    }
    return parse(*line);
}

std::string goal_from_question(std::string_view question)
{
    return line_after_label(question, "Goal:").value_or("");
}

BlocksTransition::BlocksTransition(const ComponentDeps& deps) : EnvTransition("blocksworld", deps) {}

std::string BlocksTransition::initial_render(const Task& task) const
{
    return blocks::render(initial_from_question(task.question));
}

std::optional<std::string> BlocksTransition::check_command(const std::string& r, const std::string& command,
                                                           const Task&) const
{
    return check_action(parse(r), command);
}

std::string BlocksTransition::apply_command(const std::string& r, const std::string& command, const Task&) const
{
    return blocks::render(blocks::apply(parse(r), command));
}

GoalStatus BlocksTransition::check_goal(const std::string& r, const Task& task) const
{
    const std::string g = task.goals.empty() ? goal_from_question(task.question) : task.goals;
    if (g.empty()) {
        return {};
    }
    const bool ok = satisfies(parse(r), parse_goal(g));
    return {ok, ok};
}

std::optional<std::vector<std::string>> BlocksTransition::legal_commands(const std::string& r, const Task&) const
{
    return legal_actions(parse(r));
}

std::vector<DatasetItem> BlocksDataset::load(const Json& options) const
{
    std::vector<DatasetItem> items;
    if (auto f = options.find("data_file"); f != options.end() && f->is_string()) {
        items = load_jsonl_items(f->get<std::string>());
        for (auto& it : items) {
            if (it.goals.empty()) {
                it.goals = goal_from_question(it.question);
            }
        }
        return apply_limit(std::move(items), options);
    }
    std::mt19937_64 rng(options.value("seed", 7ULL));
    const int n = options.value("n_items", 10);
    for (int i = 0; i < n; ++i) {
        const int n_blocks = options.value("n_blocks", i % 2 == 0 ? 3 : 4);
        Instance inst = random_instance(rng, n_blocks);
        const std::string goal = render_goal(inst.goal);
        items.push_back(DatasetItem{inst.question(), goal, goal});
    }
    return apply_limit(std::move(items), options);
}

EvalOutcome BlocksDataset::evaluate(const DatasetItem& item, const State& final_state,
                                    const std::optional<std::string>&) const
{
    const std::string g = item.goals.empty() ? goal_from_question(item.question) : item.goals;
    const auto goal = parse_goal(g);
    BlocksState s;
    try {
        s = parse(EnvTransition::current_render(final_state));
    } catch (const std::invalid_argument&) {
        return {};
    }
    int met = 0;
    for (const auto& a : goal) {
        met += satisfies(s, {a}) ? 1 : 0;
    }
    const bool ok = met == static_cast<int>(goal.size());
    return {ok, goal.empty() ? 0.0 : static_cast<double>(met) / static_cast<double>(goal.size())};
}

namespace {

constexpr int kSearchBound = 14;

int distance_or_far(const BlocksState& s, const std::vector<GoalAtom>& goal)
{
    return distance_to_goal(s, goal, kSearchBound).value_or(kSearchBound + 1);
}

}  // namespace

ScriptedBackend::Responder make_responder(Flavor flavor)
{
    return [flavor](const GenerationRequest& req, std::size_t hit) -> std::optional<std::string> {
        const std::string& text = req.user_text;
        const auto goal_text = line_after_label(text, "Goal:");
        if (!goal_text) {
            return std::nullopt;
        }
        const auto goal = parse_goal(*goal_text);
        if (contains(text, "Propose the single next action")) {
            const auto cur = lines_after_header(text, "Current state:", 1);
            if (!cur) {
                return std::nullopt;
            }
            const BlocksState s = parse(*cur);
            auto actions = legal_actions(s);
            std::vector<std::pair<int, std::size_t>> ranked;
            for (std::size_t i = 0; i < actions.size(); ++i) {
                ranked.emplace_back(distance_or_far(blocks::apply(s, actions[i]), goal), i);
            }
            std::stable_sort(ranked.begin(), ranked.end());
            std::vector<std::string> order;
            if (flavor == Flavor::adversarial) {
                auto worst = std::max_element(ranked.begin(), ranked.end(),
                                              [](const auto& a, const auto& b) { return a.first < b.first; });
                order.push_back(actions[worst->second]);
                for (auto it = ranked.begin(); it != ranked.end(); ++it) {
                    if (it != worst) {
                        order.push_back(actions[it->second]);
                    }
                }
            } else {
                for (const auto& r : ranked) {
                    order.push_back(actions[r.second]);
                }
            }
            return order[hit % order.size()];
        }
        if (contains(text, "Rate how much this action advances")) {
            const auto cur = lines_after_header(text, "Current state:", 1);
            const auto next = lines_after_header(text, "Resulting state:", 1);
            if (!cur || !next || trim(*next).empty()) {
                return std::string("Score: 0");
            }
            const int before = distance_or_far(parse(*cur), goal);
            const int after = distance_or_far(parse(*next), goal);
            return std::string(after < before ? "Score: 1" : "Score: 0");
        }
        return std::nullopt;
    };
}

}  // namespace blocks

// ---------------------------------------------------------------------------
// Crosswords
// ---------------------------------------------------------------------------

namespace crosswords {

Grid empty_grid()
{
    return Grid(kSize * kSize, '_');
}

std::string render_board(const Grid& g)
{
    std::string out = "Current Board:";
    for (int r = 0; r < kSize; ++r) {
        out += "\n" + g.substr(static_cast<std::size_t>(r * kSize), kSize);
    }
    return out;
}

Grid parse_board(std::string_view text)
{
    const auto rows = lines_after_header(text, "Current Board:", kSize);
    if (!rows) {
        throw std::invalid_argument("no \"Current Board:\" header");
    }
    Grid g;
    for (const auto& line : split_lines(*rows)) {
        const std::string row = trim(line);
        if (row.size() != static_cast<std::size_t>(kSize)) {
            throw std::invalid_argument("board row \"" + row + "\" is not 5 cells wide");
        }
        for (char c : row) {
            if (c != '_' && !std::isupper(static_cast<unsigned char>(c))) {
                throw std::invalid_argument("bad board cell '" + std::string(1, c) + "'");
            }
        }
        g += row;
    }
    if (g.size() != static_cast<std::size_t>(kSize * kSize)) {
        throw std::invalid_argument("board needs 5 rows");
    }
    return g;
}

std::variant<Move, std::string> parse_move(std::string_view command)
{
    static const std::regex re(R"(^\s*([A-Za-z])(\d+)\s*\.\s*(\S+)\s*$)");
    const std::string c(command);
    std::smatch m;
    if (!std::regex_match(c, m, re)) {
        return std::string("expected \"<slot>. <word>\" such as \"h1. tasks\"");
    }
    const char dir = static_cast<char>(std::tolower(static_cast<unsigned char>(m[1].str()[0])));
    const int idx = std::stoi(m[2].str());
    if ((dir != 'h' && dir != 'v') || idx < 1 || idx > kSize) {
        return "unknown slot \"" + m[1].str() + m[2].str() + "\"; expected h1-h5 or v1-v5";
    }
    const std::string word = m[3].str();
    if (!std::all_of(word.begin(), word.end(), [](unsigned char ch) { return std::isalpha(ch); })) {
        return std::string("word must contain only letters");
    }
    if (word.size() != static_cast<std::size_t>(kSize)) {
        return "word length must be 5 (got " + std::to_string(word.size()) + ")";
    }
    return Move{dir == 'h', idx - 1, upper(word)};
}

std::vector<std::string> slot_words(const Grid& g)
{
    std::vector<std::string> out;
    for (int r = 0; r < kSize; ++r) {
        out.push_back(g.substr(static_cast<std::size_t>(r * kSize), kSize));
    }
    for (int c = 0; c < kSize; ++c) {
        std::string w;
        for (int r = 0; r < kSize; ++r) {
            w += g[static_cast<std::size_t>(r * kSize + c)];
        }
        out.push_back(w);
    }
    return out;
}

std::string slot_name(int slot)
{
    return (slot < kSize ? "h" : "v") + std::to_string(slot % kSize + 1);
}

Grid apply_move(const Grid& g, const Move& m)
{
    Grid out = g;
    for (int k = 0; k < kSize; ++k) {
        const int cell = m.horizontal ? m.index * kSize + k : k * kSize + m.index;
        out[static_cast<std::size_t>(cell)] = m.word[static_cast<std::size_t>(k)];
    }
    return out;
}

ClueScore eval_crosswords(const Grid& board, const Grid& key)
{
    const auto a = slot_words(board);
    const auto b = slot_words(key);
    int correct = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        correct += a[i] == b[i] ? 1 : 0;
    }
    return {correct == 2 * kSize, correct / 10.0};
}

std::string Puzzle::question() const
{
    std::string q = "Solve the 5x5 mini crossword. Each answer is a 5-letter word.";
    for (std::size_t i = 0; i < clues.size(); ++i) {
        q += "\n" + slot_name(static_cast<int>(i)) + ". " + clues[i];
    }
    return q;
}

Puzzle synthetic_puzzle(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> letter(0, 25);
    Puzzle p;
    for (int i = 0; i < kSize * kSize; ++i) {
        p.key += static_cast<char>('A' + letter(rng));
    }
    for (auto w : slot_words(p.key)) {
        std::sort(w.begin(), w.end());
        p.clues.push_back("letters " + w + " in some order");
    }
    return p;
}

CrosswordsTransition::CrosswordsTransition(const ComponentDeps& deps) : EnvTransition("crosswords", deps) {}

std::string CrosswordsTransition::initial_render(const Task&) const
{
    return render_board(empty_grid());
}

std::optional<std::string> CrosswordsTransition::check_command(const std::string&, const std::string& command,
                                                               const Task&) const
{
    auto m = parse_move(command);
    if (auto* err = std::get_if<std::string>(&m)) {
        return *err;
    }
    return std::nullopt;
}

std::string CrosswordsTransition::apply_command(const std::string& r, const std::string& command, const Task&) const
{
    return render_board(apply_move(parse_board(r), std::get<Move>(parse_move(command))));
}

GoalStatus CrosswordsTransition::check_goal(const std::string& r, const Task& task) const
{
    const Grid g = parse_board(r);
    const bool solved = task.goals.size() == g.size() && eval_crosswords(g, upper(task.goals)).exact;
    const bool full = g.find('_') == std::string::npos;
    return {solved || full, solved};
}

std::vector<DatasetItem> CrosswordsDataset::load(const Json& options) const
{
    if (auto f = options.find("data_file"); f != options.end() && f->is_string()) {
        auto items = load_jsonl_items(f->get<std::string>());
        for (auto& it : items) {
            if (it.goals.empty()) {
                it.goals = it.answer;
            }
        }
        return apply_limit(std::move(items), options);
    }
    std::mt19937_64 rng(options.value("seed", 11ULL));
    const int n = options.value("n_items", 5);
    std::vector<DatasetItem> items;
    for (int i = 0; i < n; ++i) {
        Puzzle p = synthetic_puzzle(rng);
        items.push_back(DatasetItem{p.question(), p.key, p.key});
    }
    return apply_limit(std::move(items), options);
}

EvalOutcome CrosswordsDataset::evaluate(const DatasetItem& item, const State& final_state,
                                        const std::optional<std::string>&) const
{
    Grid board;
    try {
        board = parse_board(EnvTransition::current_render(final_state));
    } catch (const std::invalid_argument&) {
        return {};
    }
    const Grid key = upper(item.goals.empty() ? item.answer : item.goals);
    if (key.size() != board.size()) {
        return {};
    }
    const ClueScore s = eval_crosswords(board, key);
    return {s.exact, s.partial};
}

ScriptedBackend::Responder make_responder(std::vector<DatasetItem> items, Flavor flavor)
{
    return [items = std::move(items), flavor](const GenerationRequest& req,
                                               std::size_t hit) -> std::optional<std::string> {
        const std::string& text = req.user_text;
        const DatasetItem* item = item_for_prompt(items, text);
        if (!item) {
            return std::nullopt;
        }
        const Grid key = upper(item->goals.empty() ? item->answer : item->goals);
        const auto key_words = slot_words(key);
        if (contains(text, "Propose the single next action")) {
            const auto cur = lines_after_header(text, "Current state:", kSize + 1);
            if (!cur) {
                return std::nullopt;
            }
            const auto words = slot_words(parse_board(*cur));
            std::vector<int> wrong;
            for (int i = 0; i < 2 * kSize; ++i) {
                if (words[static_cast<std::size_t>(i)] != key_words[static_cast<std::size_t>(i)]) {
                    wrong.push_back(i);
                }
            }
            if (wrong.empty()) {
                wrong.push_back(0);
            }
            const int slot = wrong[hit % wrong.size()];
            std::string word = lower(key_words[static_cast<std::size_t>(slot)]);
            if (flavor == Flavor::adversarial && hit == 0) {
                word += "s";
            }
            return slot_name(slot) + ". " + word;
        }
        if (contains(text, "Rate how much this action advances")) {
            const auto action = line_after_label(text, "Proposed action:");
            const auto next = lines_after_header(text, "Resulting state:", kSize + 1);
            if (!action || !next) {
                return std::string("Score: 0");
            }
            auto mv = parse_move(*action);
            if (!std::holds_alternative<Move>(mv)) {
                return std::string("Score: 0");
            }
            const Move& m = std::get<Move>(mv);
            const int slot = m.horizontal ? m.index : kSize + m.index;
            return std::string(m.word == key_words[static_cast<std::size_t>(slot)] ? "Score: 1" : "Score: 0");
        }
        return std::nullopt;
    };
}

}  // namespace crosswords

// ---------------------------------------------------------------------------
// Numeric answers
// ---------------------------------------------------------------------------

namespace math {

namespace {

std::string strip_decorations(std::string_view text)
{
    std::string out;
    for (char c : text) {
        if (c != '$' && c != ',' && !std::isspace(static_cast<unsigned char>(c))) {
            out.push_back(c);
        }
    }
    if (!out.empty() && out.back() == '.') {
        out.pop_back();
    }
    return out;
}

std::optional<long long> parse_integer(const std::string& s)
{
    static const std::regex re(R"(^[+-]?\d{1,18}$)");
    if (!std::regex_match(s, re)) {
        return std::nullopt;
    }
    return std::stoll(s);
}

Rational reduce(Rational r)
{
    if (r.den < 0) {
        r.num = -r.num;
        r.den = -r.den;
    }
    const long long g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    return r;
}

}  // namespace

std::optional<Rational> parse_rational(std::string_view text)
{
    std::string s = strip_decorations(text);
    static const std::regex frac(R"(^(-?)\\d?frac\{([^{}]+)\}\{([^{}]+)\}$)");
    static const std::regex decimal(R"(^([+-]?)(\d*)\.(\d+)$)");
    std::smatch m;
    if (std::regex_match(s, m, frac)) {
        auto a = parse_integer(m[2].str());
        auto b = parse_integer(m[3].str());
        if (!a || !b || *b == 0) {
            return std::nullopt;
        }
        return reduce(Rational{m[1].str().empty() ? *a : -*a, *b});
    }
    if (auto slash = s.find('/'); slash != std::string::npos) {
        auto a = parse_integer(s.substr(0, slash));
        auto b = parse_integer(s.substr(slash + 1));
        if (!a || !b || *b == 0) {
            return std::nullopt;
        }
        return reduce(Rational{*a, *b});
    }
    if (auto i = parse_integer(s)) {
        return Rational{*i, 1};
    }
    if (std::regex_match(s, m, decimal)) {
        const std::string whole = m[2].str().empty() ? "0" : m[2].str();
        const std::string frac_digits = m[3].str();
        if (whole.size() + frac_digits.size() > 18) {
            return std::nullopt;
        }
        long long den = 1;
        for (std::size_t k = 0; k < frac_digits.size(); ++k) {
            den *= 10;
        }
        long long num = std::stoll(whole + frac_digits);
        if (m[1].str() == "-") {
            num = -num;
        }
        return reduce(Rational{num, den});
    }
    return std::nullopt;
}

std::optional<double> parse_decimal(std::string_view text)
{
    if (auto r = parse_rational(text)) {
        return static_cast<double>(r->num) / static_cast<double>(r->den);
    }
    const std::string s = strip_decorations(text);
    if (s.empty()) {
        return std::nullopt;
    }
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size() && std::isfinite(v)) {
            return v;
        }
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

bool eval_math_answer(std::string_view predicted, std::string_view gold)
{
    const auto p = parse_rational(predicted);
    const auto g = parse_rational(gold);
    if (p && g && static_cast<__int128>(p->num) * g->den == static_cast<__int128>(g->num) * p->den) {
        return true;
    }
    const auto pd = parse_decimal(predicted);
    const auto gd = parse_decimal(gold);
    return pd && gd && std::fabs(*pd - *gd) <= 1e-6;
}

std::vector<DatasetItem> builtin_items()
{
    return {
        {"What is 3 + 4 * 2?", "11", ""},
        {"What is half of 7?", "7/2", ""},
        {"A shirt costs 20 dollars and is discounted by 25%. What is the new price in dollars?", "15", ""},
        {"What is 1/3 + 1/6?", "1/2", ""},
        {"What is 2 to the power 10?", "1024", ""},
    };
}

std::vector<DatasetItem> MathDataset::load(const Json& options) const
{
    if (auto f = options.find("data_file"); f != options.end() && f->is_string()) {
        return apply_limit(load_jsonl_items(f->get<std::string>()), options);
    }
    return apply_limit(builtin_items(), options);
}

EvalOutcome MathDataset::evaluate(const DatasetItem& item, const State&, const std::optional<std::string>& answer) const
{
    const bool ok = answer && eval_math_answer(*answer, item.answer);
    return {ok, ok ? 1.0 : 0.0};
}

namespace {

std::string wrong_answer(const std::string& gold)
{
    if (auto r = parse_rational(gold)) {
        Rational w{r->num + r->den, r->den};
        w = reduce(w);
        return w.den == 1 ? std::to_string(w.num) : std::to_string(w.num) + "/" + std::to_string(w.den);
    }
    return "0";
}

}  // namespace

ScriptedBackend::Responder make_responder(std::vector<DatasetItem> items, Flavor flavor)
{
    return [items = std::move(items), flavor](const GenerationRequest& req,
                                               std::size_t hit) -> std::optional<std::string> {
        const std::string& text = req.user_text;
        const DatasetItem* item = item_for_prompt(items, text);
        if (!item) {
            return std::nullopt;
        }
        const std::string answer = flavor == Flavor::adversarial ? wrong_answer(item->answer) : item->answer;
        static const char* openers[] = {"First, identify the quantities in the question.",
                                        "Start by writing down what is asked.",
                                        "Break the problem into smaller parts."};
        static const char* closers[] = {"The answer is ", "So the answer is ", "Therefore, the answer is "};
        if (contains(text, "Next step:")) {
            const bool first = !contains(text, "Step 1:");
            if (first) {
                return std::string(openers[hit % 3]);
            }
            return std::string(closers[hit % 3]) + answer + ".";
        }
        if (contains(text, "Ask the next sub-question")) {
            if (!contains(text, "Step 1:")) {
                static const char* qs[] = {"What numbers does the question give?", "What operation is needed?",
                                           "Which quantity is unknown?"};
                return std::string(qs[hit % 3]);
            }
            static const char* finals[] = {"what is the final result?", "what is the value asked for?",
                                           "what number answers it?"};
            return std::string(kFinalSubQuestionPrefix) + ": " + finals[hit % 3];
        }
        if (contains(text, "Answer the sub-question")) {
            const auto sub = line_after_label(text, "Sub-question:").value_or("");
            if (sub.rfind(kFinalSubQuestionPrefix, 0) == 0) {
                return "The answer is " + answer + ".";
            }
            return std::string("The question states the numbers we need.");
        }
        if (contains(text, "Rate how useful the new step")) {
            const auto from = text.find("New step:");
            const auto to = text.find("Rate how useful");
            const std::string step = from == std::string::npos ? "" : text.substr(from, to - from);
            if (auto a = extract_answer_phrase(step)) {
                return std::string(eval_math_answer(*a, item->answer) ? "Score: 0.9" : "Score: 0.2");
            }
            return std::string("Score: 0.6");
        }
        return std::nullopt;
    };
}

}  // namespace math

// ---------------------------------------------------------------------------
// Toy SQL
// ---------------------------------------------------------------------------

namespace toysql {

std::shared_ptr<KvDatabase> fixture_database()
{
    auto db = std::make_shared<KvDatabase>();
    db->add_table("t", KvTable{{"k", "v"}, {{"1", "42"}, {"2", "17"}, {"3", "99"}}});
    db->add_table("places", KvTable{{"name", "city", "country"},
                                    {{"Louvre", "Paris", "France"},
                                     {"Colosseum", "Rome", "Italy"},
                                     {"Prado", "Madrid", "Spain"}}});
    return db;
}

std::shared_ptr<const ResourceBundle> fixture_resource()
{
    auto bundle = std::make_shared<ResourceBundle>("Tables: t(k, v); places(name, city, country)");
    bundle->add(make_query_sql_tool(fixture_database()));
    return bundle;
}

std::vector<SqlItem> builtin_items()
{
    return {
        {{"What value does table t store for key 1?", "42", ""}, "SELECT v FROM t WHERE k = 1"},
        {{"In which city is the Colosseum?", "Rome", ""}, "SELECT city FROM places WHERE name = 'Colosseum'"},
        {{"In which country is the Prado?", "Spain", ""}, "SELECT country FROM places WHERE name = 'Prado'"},
        {{"What value does table t store for key 3?", "99", ""}, "SELECT v FROM t WHERE k = 3"},
    };
}

std::vector<DatasetItem> SqlDataset::load(const Json& options) const
{
    if (auto f = options.find("data_file"); f != options.end() && f->is_string()) {
        return apply_limit(load_jsonl_items(f->get<std::string>()), options);
    }
    std::vector<DatasetItem> out;
    for (auto& s : builtin_items()) {
        out.push_back(s.item);
    }
    return apply_limit(std::move(out), options);
}

EvalOutcome SqlDataset::evaluate(const DatasetItem& item, const State&, const std::optional<std::string>& answer) const
{
    const bool ok = answer && lower(trim(*answer)) == lower(trim(item.answer));
    return {ok, ok ? 1.0 : 0.0};
}

ScriptedBackend::Responder make_responder(Flavor flavor)
{
    const auto items = builtin_items();
    return [items, flavor](const GenerationRequest& req, std::size_t hit) -> std::optional<std::string> {
        const std::string& text = req.user_text;
        const SqlItem* item = nullptr;
        for (const auto& it : items) {
            if (contains(text, it.item.question)) {
                item = &it;
            }
        }
        if (!item) {
            return std::nullopt;
        }
        static const char* thoughts[] = {"I should look this up in the database.", "The tables should have this.",
                                         "A query will answer this."};
        if (contains(text, "How well does this trajectory answer the question")) {
            return std::string(contains(text, "Final Answer: " + item->item.answer) ? "9/10" : "2/10");
        }
        if (contains(text, "Final Answer: <answer>")) {
            const auto last_obs = text.rfind("Observation: ");
            if (last_obs == std::string::npos) {
                if (flavor == Flavor::adversarial) {
                    return "Thought: " + std::string(thoughts[hit % 3]) + "\nAction: query_sql\nAction Input: " +
                           Json{{"sql", item->sql}}.dump();
                }
                return "Thought: " + std::string(thoughts[hit % 3]) + "\nAction: query_sql\nAction Input: " +
                       Json{{"query", item->sql}}.dump();
            }
            std::string obs = trim(text.substr(last_obs + 13, text.find('\n', last_obs) - last_obs - 13));
            if (obs.rfind("error", 0) == 0 || obs.rfind("validation error", 0) == 0) {
                return "Thought: Retry with a valid query.\nAction: query_sql\nAction Input: " +
                       Json{{"query", item->sql}}.dump();
            }
            return "Thought: The query result answers the question.\nFinal Answer: " + obs;
        }
        return std::nullopt;
    };
}

}  // namespace toysql

ScriptedBackend::Responder mock_responder(const std::string& dataset, const std::vector<DatasetItem>& items,
                                          Flavor flavor)
{
    if (dataset == "blocksworld") {
        return blocks::make_responder(flavor);
    }
    if (dataset == "crosswords") {
        return crosswords::make_responder(items, flavor);
    }
    if (dataset == "toy-math") {
        return math::make_responder(items, flavor);
    }
    if (dataset == "toy-sql") {
        return toysql::make_responder(flavor);
    }
    throw NotFoundError("no scripted responder for dataset \"" + dataset + "\"");
}

}  // namespace arbor
