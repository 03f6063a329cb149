#include "arbor/components.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>

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

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string first_nonempty_line(std::string_view text)
{
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        if (!line.empty()) {
            return line;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    return {};
}

std::string strip_label(std::string s, std::string_view label)
{
    if (lower(s.substr(0, label.size())) == lower(label)) {
        s = trim(std::string_view(s).substr(label.size()));
    }
    return s;
}

/// "Step 1: ...\nStep 2: ...\n" for the steps taken so far.
std::string numbered_history(const State& state)
{
    std::string out;
    int k = 1;
    for (const auto& s : state.steps()) {
        out += "Step " + std::to_string(k++) + ": " + s->render() + "\n";
    }
    return out;
}

}  // namespace

std::string normalize_action_text(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::optional<double> parse_score(std::string_view text)
{
    static const std::regex ratio(R"((-?\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?))");
    static const std::regex number(R"(-?\d+(?:\.\d+)?)");
    const std::string s(text);
    std::smatch m;
    double value = 0.0;
    if (std::regex_search(s, m, ratio)) {
        const double den = std::stod(m[2].str());
        if (den <= 0.0) {
            return std::nullopt;
        }
        value = std::stod(m[1].str()) / den;
    } else if (std::regex_search(s, m, number)) {
        value = std::stod(m[0].str());
        const bool whole = m[0].str().find('.') == std::string::npos;
        if (whole && value > 1.0 && value <= 10.0) {
            value /= 10.0;
        }
    } else {
        return std::nullopt;
    }
    return std::clamp(value, 0.0, 1.0);
}

std::optional<std::string> extract_answer_phrase(std::string_view text)
{
    static const std::regex re(R"(answer is[:\s]*(.+))", std::regex::icase);
    std::string s(text);
    std::smatch m;
    std::optional<std::string> found;
    // Use the last occurrence.
    auto begin = s.cbegin();
    while (std::regex_search(begin, s.cend(), m, re)) {
        found = m[1].str();
        begin = m[1].first;
    }
    if (!found) {
        return std::nullopt;
    }
    std::string a = trim(first_nonempty_line(*found));
    while (!a.empty() && (a.back() == '.' || a.back() == ' ')) {
        a.pop_back();
    }
    if (a.size() >= 2 && a.front() == '$' && a.back() == '$') {
        a = a.substr(1, a.size() - 2);
    }
    return a.empty() ? std::nullopt : std::optional<std::string>(a);
}

// ---------------------------------------------------------------------------
// LlmComponent
// ---------------------------------------------------------------------------

LlmComponent::LlmComponent(ComponentKind kind, std::string name, std::optional<TaskType> task_type,
                           const ComponentDeps& deps)
    : llm_(deps.backend, deps.logger, deps.tracker, std::string(to_string(kind)) + ":" + name), kind_(kind),
      name_(std::move(name)), task_type_(task_type), task_name_(deps.task_name), prompts_(deps.prompts),
      bindings_(deps.bindings), options_(deps.options.is_object() ? deps.options : Json::object()), warn_(deps.warn)
{
    if (auto it = options_.find("prompts"); it != options_.end() && it->is_object()) {
        for (auto role : {PromptRole::task_prompt, PromptRole::usr_prompt}) {
            auto p = it->find(std::string(to_string(role)));
            if (p != it->end() && p->is_string()) {
                set_explicit_prompt(role, p->get<std::string>());
            }
        }
    }
}

void LlmComponent::set_explicit_prompt(PromptRole role, std::string text)
{
    explicit_[role] = PromptSpec::make(kind_, role, std::move(text));
}

std::string LlmComponent::render(PromptRole role, const PromptBindings& extra) const
{
    std::optional<PromptSpec> explicit_spec;
    if (auto it = explicit_.find(role); it != explicit_.end()) {
        explicit_spec = it->second;
    }
    PromptSpec spec;
    if (explicit_spec) {
        spec = *explicit_spec;
    } else {
        if (!prompts_) {
            throw PromptError("component " + name_ + " has no prompt registry");
        }
        spec = prompts_->lookup_prompt(kind_, role, std::nullopt,
                                       task_name_.empty() ? std::nullopt : std::optional<std::string>(task_name_),
                                       task_type_);
    }
    PromptBindings all = bindings_;
    for (const auto& [k, v] : extra) {
        all[k] = v;
    }
    return render_prompt(spec, all);
}

bool LlmComponent::has_prompt(PromptRole role) const
{
    if (explicit_.count(role)) {
        return true;
    }
    return prompts_ &&
           prompts_->has(kind_, role, task_name_.empty() ? std::nullopt : std::optional<std::string>(task_name_),
                         task_type_);
}

GenerationRequest LlmComponent::request(const PromptBindings& bindings) const
{
    GenerationRequest r;
    if (has_prompt(PromptRole::task_prompt)) {
        r.system_text = render(PromptRole::task_prompt, bindings);
    }
    r.user_text = render(PromptRole::usr_prompt, bindings);
    r.max_tokens = option_int("max_tokens", 512);
    return r;
}

void LlmComponent::warn(const std::string& message) const
{
    if (warn_) {
        warn_(name_ + ": " + message);
    }
}

int LlmComponent::option_int(const char* key, int fallback) const
{
    auto it = options_.find(key);
    return it != options_.end() && it->is_number() ? it->get<int>() : fallback;
}

double LlmComponent::option_double(const char* key, double fallback) const
{
    auto it = options_.find(key);
    return it != options_.end() && it->is_number() ? it->get<double>() : fallback;
}

// ---------------------------------------------------------------------------
// SamplingPolicy
// ---------------------------------------------------------------------------

SamplingPolicy::SamplingPolicy(std::string name, std::optional<TaskType> task_type, const ComponentDeps& deps)
    : Policy(ComponentKind::policy, std::move(name), task_type, deps)
{
    schedule_.base = option_double("temperature", 0.8);
    schedule_.step = option_double("temperature_step", 0.2);
    schedule_.cap = option_double("temperature_cap", 1.2);
    schedule_.current = schedule_.base;
    max_samples_per_action_ = std::max(1, option_int("max_samples_per_action", 2));
    retry_budget_ = std::max(0, option_int("retry_budget", 1));
}

std::vector<Action> SamplingPolicy::sample(const State& state, int n, const Task& task)
{
    if (n < 1) {
        throw std::invalid_argument("policy needs n >= 1");
    }
    schedule_.reset();
    std::vector<Action> out;
    std::set<std::string> seen;
    const PromptBindings b = bindings(state, task);
    const int max_samples = n * max_samples_per_action_;
    int invalid_retries = 0;
    for (int samples = 0; static_cast<int>(out.size()) < n && samples < max_samples; ++samples) {
        GenerationRequest req = request(b);
        req.temperature = schedule_.current;
        const std::string text = llm_.generate(req).text;
        auto action = parse(text, state, task);
        if (!action) {
            warn("could not parse policy output");
            continue;
        }
        std::string key = normalize_action_text((*action)->text());
        if (key.empty() && !action_as<ToolAction>(*action)) {
            continue;
        }
        if (seen.count(key)) {
            schedule_ = escalate_on_duplicate(schedule_, true);
            continue;
        }
        if (transition_) {
            if (auto err = transition_->validate(state, *action, task)) {
                if (invalid_retries < retry_budget_) {
                    ++invalid_retries;
                    warn("rejected \"" + (*action)->text() + "\": " + *err + "; retrying");
                    continue;
                }
                if (!keep_invalid_) {
                    continue;
                }
            }
        }
        invalid_retries = 0;
        seen.insert(std::move(key));
        out.push_back(std::move(*action));
    }
    return out;
}

std::vector<Action> SamplingPolicy::get_actions(const State& state, int n, const Task& task)
{
    auto out = sample(state, n, task);
    if (out.empty()) {
        throw EmptyPolicyError("policy " + name() + " produced no usable action");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Language-grounded built-ins
// ---------------------------------------------------------------------------

ConcatPolicy::ConcatPolicy(const ComponentDeps& deps, std::string name, std::optional<TaskType> task_type)
    : SamplingPolicy(std::move(name), task_type, deps)
{
}

PromptBindings ConcatPolicy::bindings(const State& state, const Task& task) const
{
    return {{"question", task.question},
            {"history", numbered_history(state)},
            {"step_number", std::to_string(state.size() + 1)}};
}

std::optional<Action> ConcatPolicy::parse(const std::string& output, const State& state, const Task&) const
{
    std::string line = first_nonempty_line(output);
    line = strip_label(line, "Step " + std::to_string(state.size() + 1) + ":");
    line = strip_label(line, "Next step:");
    if (line.empty()) {
        return std::nullopt;
    }
    return make_action<TextAction>(std::move(line));
}

ConcatTransition::ConcatTransition(const ComponentDeps& deps)
    : Transition(ComponentKind::transition, "concat", TaskType::language_grounded, deps)
{
}

State ConcatTransition::init_state(const Task& task) const
{
    return State(StateKind::concat, task.question, task.question);
}

Step ConcatTransition::step(const State&, const Action& action, const Task&)
{
    if (action_as<TextAction>(action)) {
        return make_step<ConcatStep>(action);
    }
    return make_step<ConcatStep>(make_action<TextAction>(action->text()));
}

GoalStatus ConcatTransition::goal_check(const Task&, const State& state) const
{
    const bool done = extract_answer(state).has_value();
    return {done, done};
}

std::optional<std::string> ConcatTransition::extract_answer(const State& state) const
{
    if (state.empty()) {
        return std::nullopt;
    }
    return extract_answer_phrase(state.steps().back()->render());
}

GenerativePRM::GenerativePRM(const ComponentDeps& deps, std::string name, std::optional<TaskType> task_type)
    : RewardModel(ComponentKind::reward, std::move(name), task_type, deps)
{
    default_score_ = option_double("default_score", 0.0);
}

double GenerativePRM::score(const State& state, const Step& step, const Task& task)
{
    PromptBindings b{{"question", task.question}, {"history", numbered_history(state)}, {"step", step->render()}};
    GenerationRequest req = request(b);
    req.temperature = 0.0;
    const std::string text = llm_.generate(req).text;
    if (auto s = parse_score(text)) {
        return *s;
    }
    warn("unparseable score \"" + first_nonempty_line(text) + "\"; using default");
    return default_score_;
}

SubQuestionPolicy::SubQuestionPolicy(const ComponentDeps& deps) : SamplingPolicy("rap", std::nullopt, deps)
{
    if (!has_prompt(PromptRole::usr_prompt)) {
        set_explicit_prompt(PromptRole::usr_prompt,
                            "Question: {question}\n{history}Ask the next sub-question. When enough is known, ask \"" +
                                std::string(kFinalSubQuestionPrefix) + ": ...\"\nSub-question:");
    }
}

PromptBindings SubQuestionPolicy::bindings(const State& state, const Task& task) const
{
    return {{"question", task.question}, {"history", numbered_history(state)}};
}

std::optional<Action> SubQuestionPolicy::parse(const std::string& output, const State&, const Task&) const
{
    std::string line = strip_label(first_nonempty_line(output), "Sub-question:");
    if (line.empty()) {
        return std::nullopt;
    }
    return make_action<SubQuestionAction>(std::move(line));
}

SubQATransition::SubQATransition(const ComponentDeps& deps)
    : Transition(ComponentKind::transition, "rap", std::nullopt, deps)
{
    if (!has_prompt(PromptRole::usr_prompt)) {
        set_explicit_prompt(PromptRole::usr_prompt,
                            "Question: {question}\n{history}Sub-question: {sub_question}\nAnswer the sub-question. "
                            "For the final sub-question end with \"The answer is <answer>.\"\nAnswer:");
    }
}

State SubQATransition::init_state(const Task& task) const
{
    return State(StateKind::trajectory, task.question, task.question);
}

Step SubQATransition::step(const State& state, const Action& action, const Task& task)
{
    const std::string q = action->text();
    PromptBindings b{{"question", task.question}, {"history", numbered_history(state)}, {"sub_question", q}};
    GenerationRequest req = request(b);
    req.temperature = 0.0;
    std::string answer = trim(llm_.generate(req).text);
    return make_step<SubQAStep>(q, strip_label(answer, "Answer:"));
}

GoalStatus SubQATransition::goal_check(const Task&, const State& state) const
{
    if (state.empty()) {
        return {};
    }
    const auto* last = step_as<SubQAStep>(state.steps().back());
    const bool done = last && lower(last->sub_question).rfind(lower(kFinalSubQuestionPrefix), 0) == 0;
    return {done, done && extract_answer(state).has_value()};
}

std::optional<std::string> SubQATransition::extract_answer(const State& state) const
{
    if (state.empty()) {
        return std::nullopt;
    }
    const auto* last = step_as<SubQAStep>(state.steps().back());
    return last ? extract_answer_phrase(last->sub_answer) : std::nullopt;
}

// ---------------------------------------------------------------------------
// Environment-grounded
// ---------------------------------------------------------------------------

std::string validation_failure_message(int retries)
{
    return "Validation failed after " + std::to_string(retries) + " retries";
}

EnvTransition::EnvTransition(std::string name, const ComponentDeps& deps)
    : Transition(ComponentKind::transition, std::move(name), TaskType::env_grounded, deps)
{
    retry_budget_ = std::max(0, option_int("retry_budget", 1));
}

std::string EnvTransition::current_render(const State& state)
{
    for (auto it = state.steps().rbegin(); it != state.steps().rend(); ++it) {
        if (const auto* e = step_as<EnvStep>(*it); e && e->next_state) {
            return *e->next_state;
        }
    }
    return state.init_render();
}

State EnvTransition::init_state(const Task& task) const
{
    return State(StateKind::env, task.question, initial_render(task));
}

Step EnvTransition::step(const State& state, const Action& action, const Task& task)
{
    const std::string command = trim(action->text());
    const std::string render = current_render(state);
    if (auto err = check_command(render, command, task)) {
        warn("invalid action \"" + command + "\": " + *err);
        return make_step<EnvStep>(command, std::nullopt, validation_failure_message(retry_budget_));
    }
    return make_step<EnvStep>(command, apply_command(render, command, task));
}

GoalStatus EnvTransition::goal_check(const Task& task, const State& state) const
{
    return check_goal(current_render(state), task);
}

std::optional<std::vector<Action>> EnvTransition::generate_actions(const State& state, const Task& task) const
{
    auto cmds = legal_commands(current_render(state), task);
    if (!cmds) {
        return std::nullopt;
    }
    std::vector<Action> out;
    for (auto& c : *cmds) {
        out.push_back(make_action<EnvAction>(std::move(c)));
    }
    return out;
}

std::optional<std::string> EnvTransition::validate(const State& state, const Action& action, const Task& task) const
{
    return check_command(current_render(state), trim(action->text()), task);
}

EnvGroundedPolicy::EnvGroundedPolicy(const ComponentDeps& deps)
    : SamplingPolicy("env_grounded", TaskType::env_grounded, deps)
{
}

std::vector<Action> EnvGroundedPolicy::get_actions(const State& state, int n, const Task& task)
{
    std::optional<std::vector<Action>> legal;
    if (transition_) {
        legal = transition_->generate_actions(state, task);
    }
    keep_invalid_ = !legal.has_value();
    auto out = sample(state, n, task);
    if (legal) {
        std::set<std::string> seen;
        for (const auto& a : out) {
            seen.insert(normalize_action_text(a->text()));
        }
        for (const auto& a : *legal) {
            if (static_cast<int>(out.size()) >= n) {
                break;
            }
            if (seen.insert(normalize_action_text(a->text())).second) {
                out.push_back(a);
            }
        }
    }
    if (out.empty()) {
        throw EmptyPolicyError("policy " + name() + " produced no usable action");
    }
    return out;
}

PromptBindings EnvGroundedPolicy::bindings(const State& state, const Task& task) const
{
    std::string valid;
    if (transition_) {
        if (auto legal = transition_->generate_actions(state, task)) {
            valid = "Valid actions:\n";
            for (const auto& a : *legal) {
                valid += "- " + a->text() + "\n";
            }
        }
    }
    std::string history;
    for (const auto& s : state.steps()) {
        if (const auto* e = step_as<EnvStep>(s)) {
            history += e->action + (e->error ? " (rejected)" : "") + "\n";
        }
    }
    return {{"question", task.question},
            {"state", EnvTransition::current_render(state)},
            {"valid_actions", valid},
            {"history", history.empty() ? "none\n" : history}};
}

std::optional<Action> EnvGroundedPolicy::parse(const std::string& output, const State&, const Task&) const
{
    std::string line = strip_label(first_nonempty_line(output), "Action:");
    if (line.empty()) {
        return std::nullopt;
    }
    return make_action<EnvAction>(std::move(line));
}

EnvGroundedPRM::EnvGroundedPRM(const ComponentDeps& deps)
    : RewardModel(ComponentKind::reward, "env_grounded", TaskType::env_grounded, deps)
{
    default_score_ = option_double("default_score", 0.0);
}

double EnvGroundedPRM::score(const State& state, const Step& step, const Task& task)
{
    const auto* env = step_as<EnvStep>(step);
    if (!env || env->has_error()) {
        return 0.0;
    }
    PromptBindings b{{"question", task.question},
                     {"state", EnvTransition::current_render(state)},
                     {"action", env->action},
                     {"next_state", env->next_state.value_or("")}};
    GenerationRequest req = request(b);
    req.temperature = 0.0;
    const std::string text = llm_.generate(req).text;
    if (auto s = parse_score(text)) {
        return *s;
    }
    warn("unparseable score \"" + first_nonempty_line(text) + "\"; using default");
    return default_score_;
}

// ---------------------------------------------------------------------------
// Tool use
// ---------------------------------------------------------------------------

std::optional<ReActTurn> parse_react_output(std::string_view text)
{
    const std::string s(text);
    const std::string ls = lower(s);
    auto label_pos = [&](std::string_view label) { return ls.find(lower(label)); };

    const auto final_pos = label_pos("final answer:");
    const auto action_pos = label_pos("action:");
    const auto thought_pos = label_pos("thought:");

    auto section_end = [&](std::size_t from) {
        std::size_t end = s.size();
        for (auto p : {final_pos, action_pos, label_pos("action input:"), label_pos("observation:")}) {
            if (p != std::string::npos && p > from && p < end) {
                end = p;
            }
        }
        return end;
    };

    std::size_t body_start = std::min(final_pos, action_pos);
    if (body_start == std::string::npos) {
        return std::nullopt;
    }
    std::string thought;
    if (thought_pos != std::string::npos && thought_pos < body_start) {
        thought = trim(std::string_view(s).substr(thought_pos + 8, body_start - thought_pos - 8));
    } else {
        thought = trim(std::string_view(s).substr(0, body_start));
    }

    if (final_pos != std::string::npos && final_pos <= action_pos) {
        std::string answer = trim(std::string_view(s).substr(final_pos + 13));
        auto a = ToolAction::finish(answer);
        return ReActTurn{thought, std::make_shared<const ToolAction>("", a->arguments, true, thought)};
    }

    const std::size_t name_start = action_pos + 7;
    const std::string name = first_nonempty_line(std::string_view(s).substr(name_start, section_end(action_pos) - name_start));
    if (name.empty()) {
        return std::nullopt;
    }
    Json args = Json::object();
    if (auto input_pos = label_pos("action input:"); input_pos != std::string::npos) {
        const std::size_t start = input_pos + 13;
        const std::string raw = trim(std::string_view(s).substr(start, section_end(input_pos) - start));
        try {
            Json parsed = Json::parse(raw);
            args = parsed.is_object() ? parsed : Json{{"input", parsed}};
        } catch (const Json::parse_error&) {
            args = Json{{"input", raw}};
        }
    }
    return ReActTurn{thought, std::make_shared<const ToolAction>(name, std::move(args), false, thought)};
}

ToolUsePolicy::ToolUsePolicy(const ComponentDeps& deps)
    : SamplingPolicy("tool_use", TaskType::tool_use, deps), resource_(deps.resource)
{
}

PromptBindings ToolUsePolicy::bindings(const State& state, const Task& task) const
{
    std::string history;
    for (const auto& s : state.steps()) {
        history += s->render() + "\n";
    }
    return {{"catalog", resource_ ? render_tool_catalog(*resource_) : std::string{}},
            {"question", task.question},
            {"history", history}};
}

std::optional<Action> ToolUsePolicy::parse(const std::string& output, const State&, const Task&) const
{
    auto turn = parse_react_output(output);
    if (!turn) {
        return std::nullopt;
    }
    return turn->action;
}

ToolUseTransition::ToolUseTransition(const ComponentDeps& deps)
    : Transition(ComponentKind::transition, "tool_use", TaskType::tool_use, deps), resource_(deps.resource)
{
}

State ToolUseTransition::init_state(const Task& task) const
{
    return State(StateKind::tool, task.question, task.question);
}

Step ToolUseTransition::step(const State&, const Action& action, const Task&)
{
    auto tool = std::dynamic_pointer_cast<const ToolAction>(action);
    if (!tool) {
        auto wrapped = std::make_shared<const ToolAction>(action->text(), Json::object());
        return make_step<ToolStep>("", wrapped, std::string("error: expected a tool call"));
    }
    if (tool->is_finish) {
        return make_step<ToolStep>(tool->thought, tool, std::nullopt);
    }
    if (!resource_) {
        return make_step<ToolStep>(tool->thought, tool, std::string("error: no tools are configured"));
    }
    return make_step<ToolStep>(tool->thought, tool, dispatch_tool(*resource_, tool->tool_name, tool->arguments));
}

GoalStatus ToolUseTransition::goal_check(const Task&, const State& state) const
{
    if (state.empty()) {
        return {};
    }
    const auto* last = step_as<ToolStep>(state.steps().back());
    const bool done = last && last->action && last->action->is_finish;
    return {done, done};
}

std::optional<std::string> ToolUseTransition::extract_answer(const State& state) const
{
    if (state.empty()) {
        return std::nullopt;
    }
    const auto* last = step_as<ToolStep>(state.steps().back());
    if (!last || !last->action || !last->action->is_finish) {
        return std::nullopt;
    }
    return last->action->answer();
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

void register_builtin_prompts(PromptRegistry& prompts)
{
    using K = ComponentKind;
    using R = PromptRole;
    auto add = [&](K kind, R role, std::optional<TaskType> type, const char* text) {
        prompts.register_prompt(PromptKey{kind, role, type, std::nullopt}, PromptSpec::make(kind, role, text));
    };

    add(K::policy, R::task_prompt, std::nullopt, "You solve problems one careful step at a time.");
    add(K::policy, R::usr_prompt, std::nullopt,
        "Question: {question}\n{history}Write step {step_number}. If the final answer is known, write "
        "\"The answer is <answer>.\"\nNext step:");
    add(K::reward, R::usr_prompt, std::nullopt,
        "Question: {question}\n{history}New step: {step}\nRate how useful the new step is for solving the "
        "question on a scale from 0 to 1. Reply as \"Score: <value>\".");
    add(K::transition, R::usr_prompt, std::nullopt,
        "Question: {question}\n{history}Sub-question: {sub_question}\nAnswer:");

    add(K::policy, R::usr_prompt, TaskType::env_grounded,
        "{question}\nCurrent state:\n{state}\n{valid_actions}Actions so far:\n{history}Propose the single next "
        "action.\nAction:");
    add(K::reward, R::usr_prompt, TaskType::env_grounded,
        "{question}\nCurrent state:\n{state}\nProposed action: {action}\nResulting state:\n{next_state}\nRate how "
        "much this action advances the goal on a scale from 0 to 1. Reply as \"Score: <value>\".");

    add(K::policy, R::task_prompt, TaskType::tool_use,
        "Answer the question by calling tools. Use exactly one tool per turn.");
    add(K::policy, R::usr_prompt, TaskType::tool_use,
        "{catalog}\nQuestion: {question}\n{history}Respond with\nThought: <reasoning>\nAction: <tool name>\n"
        "Action Input: <JSON arguments>\nor, when done,\nThought: <reasoning>\nFinal Answer: <answer>\n");
    add(K::reward, R::usr_prompt, TaskType::tool_use,
        "Question: {question}\nTrajectory:\n{trajectory}\nHow well does this trajectory answer the question? "
        "Reply with a score out of 10, e.g. \"7/10\".");
}

}  // namespace arbor
