#include "arbor/prompts.hpp"

#include <fstream>
#include <tuple>

#include <nlohmann/json.hpp>

namespace arbor {

std::string_view to_string(ComponentKind kind)
{
    switch (kind) {
    case ComponentKind::policy: return "policy";
    case ComponentKind::transition: return "transition";
    case ComponentKind::reward: return "reward";
    case ComponentKind::dataset: return "dataset";
    case ComponentKind::resource: return "resource";
    case ComponentKind::search: return "search";
    }
    return "policy";
}

std::string_view to_string(TaskType type)
{
    switch (type) {
    case TaskType::language_grounded: return "language_grounded";
    case TaskType::env_grounded: return "env_grounded";
    case TaskType::tool_use: return "tool_use";
    }
    return "language_grounded";
}

std::optional<ComponentKind> component_kind_from_string(std::string_view s)
{
    for (auto k : {ComponentKind::policy, ComponentKind::transition, ComponentKind::reward, ComponentKind::dataset,
                   ComponentKind::resource, ComponentKind::search}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

std::optional<TaskType> task_type_from_string(std::string_view s)
{
    for (auto t : {TaskType::language_grounded, TaskType::env_grounded, TaskType::tool_use}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    return std::nullopt;
}

std::string_view to_string(PromptRole role)
{
    return role == PromptRole::task_prompt ? "task_prompt" : "usr_prompt";
}

std::string_view to_string(PromptLevel level)
{
    switch (level) {
    case PromptLevel::explicit_param: return "explicit";
    case PromptLevel::task_name: return "task_name";
    case PromptLevel::task_type: return "task_type";
    case PromptLevel::fallback_default: return "default";
    }
    return "default";
}

namespace {

// Walks `text`, calling on_literal for plain runs and on_field for {name}.
template <class Literal, class Field>
void scan_template(std::string_view text, Literal&& on_literal, Field&& on_field)
{
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '{') {
            if (i + 1 < text.size() && text[i + 1] == '{') {
                on_literal('{');
                i += 2;
                continue;
            }
            const auto close = text.find('}', i + 1);
            if (close == std::string_view::npos) {
                throw PromptError("unterminated placeholder at offset " + std::to_string(i));
            }
            auto name = text.substr(i + 1, close - i - 1);
            if (name.empty() || name.find('{') != std::string_view::npos) {
                throw PromptError("malformed placeholder at offset " + std::to_string(i));
            }
            on_field(name);
            i = close + 1;
        } else if (c == '}') {
            if (i + 1 < text.size() && text[i + 1] == '}') {
                on_literal('}');
                i += 2;
                continue;
            }
            throw PromptError("unmatched '}' at offset " + std::to_string(i));
        } else {
            on_literal(c);
            ++i;
        }
    }
}

}  // namespace

std::set<std::string> parse_placeholders(std::string_view text)
{
    std::set<std::string> names;
    scan_template(text, [](char) {}, [&](std::string_view n) { names.emplace(n); });
    return names;
}

PromptSpec PromptSpec::make(ComponentKind kind, PromptRole role, std::string text)
{
    PromptSpec s;
    s.role = role;
    s.component_kind = kind;
    s.placeholder_names = parse_placeholders(text);
    s.template_text = std::move(text);
    return s;
}

std::string render_prompt(const PromptSpec& spec, const PromptBindings& bindings)
{
    std::string out;
    out.reserve(spec.template_text.size());
    scan_template(
        spec.template_text, [&](char c) { out.push_back(c); },
        [&](std::string_view name) {
            auto it = bindings.find(name);
            if (it == bindings.end()) {
                throw PromptError("missing binding for placeholder \"" + std::string(name) + "\"");
            }
            out += it->second;
        });
    return out;
}

PromptLevel PromptKey::level() const
{
    if (task_name) {
        return PromptLevel::task_name;
    }
    if (task_type) {
        return PromptLevel::task_type;
    }
    return PromptLevel::fallback_default;
}

PromptRegistry::Slot PromptRegistry::slot_of(const PromptKey& key)
{
    std::string discriminator;
    switch (key.level()) {
    case PromptLevel::task_name: discriminator = *key.task_name; break;
    case PromptLevel::task_type: discriminator = std::string(to_string(*key.task_type)); break;
    default: break;
    }
    return {static_cast<int>(key.component_kind), static_cast<int>(key.role), static_cast<int>(key.level()),
            discriminator};
}

void PromptRegistry::register_prompt(const PromptKey& key, PromptSpec spec)
{
    if (spec.component_kind != key.component_kind || spec.role != key.role) {
        throw PromptError("prompt spec kind/role does not match its key");
    }
    auto [it, inserted] = entries_.emplace(slot_of(key), std::move(spec));
    if (!inserted) {
        throw PromptError("prompt already registered for " + std::string(to_string(key.component_kind)) + "/" +
                          std::string(to_string(key.role)) + " at level " + std::string(to_string(key.level())) +
                          (std::get<3>(it->first).empty() ? "" : " (" + std::get<3>(it->first) + ")"));
    }
}

bool PromptRegistry::remove(const PromptKey& key)
{
    return entries_.erase(slot_of(key)) > 0;
}

PromptLookup PromptRegistry::resolve(ComponentKind kind, PromptRole role,
                                     const std::optional<PromptSpec>& explicit_spec,
                                     const std::optional<std::string>& task_name,
                                     const std::optional<TaskType>& task_type) const
{
    if (explicit_spec) {
        return {*explicit_spec, PromptLevel::explicit_param};
    }
    std::string chain = "explicit";
    if (task_name) {
        auto it = entries_.find(slot_of(PromptKey{kind, role, std::nullopt, task_name}));
        if (it != entries_.end()) {
            return {it->second, PromptLevel::task_name};
        }
        chain += " -> task_name(" + *task_name + ")";
    }
    if (task_type) {
        auto it = entries_.find(slot_of(PromptKey{kind, role, task_type, std::nullopt}));
        if (it != entries_.end()) {
            return {it->second, PromptLevel::task_type};
        }
        chain += " -> task_type(" + std::string(to_string(*task_type)) + ")";
    }
    auto it = entries_.find(slot_of(PromptKey{kind, role, std::nullopt, std::nullopt}));
    if (it != entries_.end()) {
        return {it->second, PromptLevel::fallback_default};
    }
    chain += " -> default";
    throw PromptError("no prompt for " + std::string(to_string(kind)) + "/" + std::string(to_string(role)) +
                      " along " + chain);
}

bool PromptRegistry::has(ComponentKind kind, PromptRole role, const std::optional<std::string>& task_name,
                         const std::optional<TaskType>& task_type) const
{
    try {
        resolve(kind, role, std::nullopt, task_name, task_type);
        return true;
    } catch (const PromptError&) {
        return false;
    }
}

PromptBindings load_prompt_bindings(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw PromptError("cannot read prompt config " + file.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw PromptError("prompt config " + file.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) {
        throw PromptError("prompt config must be a JSON object");
    }
    PromptBindings out;
    for (const auto& [k, v] : doc.items()) {
        if (!v.is_string()) {
            throw PromptError("prompt config value for \"" + k + "\" must be a string");
        }
        out.emplace(k, v.get<std::string>());
    }
    return out;
}

}  // namespace arbor
