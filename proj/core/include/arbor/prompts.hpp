#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "arbor/kinds.hpp"

namespace arbor {

enum class PromptRole { task_prompt, usr_prompt };

std::string_view to_string(PromptRole role);

class PromptError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Template with `{name}` placeholders; `{{` and `}}` are literal braces.
struct PromptSpec {
    PromptRole role = PromptRole::usr_prompt;
    ComponentKind component_kind = ComponentKind::policy;
    std::string template_text;
    std::set<std::string> placeholder_names;

    /// Parses the placeholders out of `text`. Throws PromptError on unbalanced braces.
    static PromptSpec make(ComponentKind kind, PromptRole role, std::string text);

    friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

std::set<std::string> parse_placeholders(std::string_view text);

using PromptBindings = std::map<std::string, std::string, std::less<>>;

/// Substitutes every placeholder. Extra bindings are ignored.
std::string render_prompt(const PromptSpec& spec, const PromptBindings& bindings);

enum class PromptLevel { explicit_param, task_name, task_type, fallback_default };

std::string_view to_string(PromptLevel level);

/// Storage slot. A key with `task_name` set is a task-instance entry; with
/// only `task_type` set, a task-type entry; with neither, the default.
struct PromptKey {
    ComponentKind component_kind = ComponentKind::policy;
    PromptRole role = PromptRole::usr_prompt;
    std::optional<TaskType> task_type;
    std::optional<std::string> task_name;

    PromptLevel level() const;
};

struct PromptLookup {
    PromptSpec spec;
    PromptLevel level;
};

/// Prompt store with fallback lookup: explicit parameter, then task name,
/// then task type, then default. Written during startup, read-only after.
class PromptRegistry {
  public:
    void register_prompt(const PromptKey& key, PromptSpec spec);
    /// Removes the entry at `key`; returns whether one existed.
    bool remove(const PromptKey& key);

    /// Components with no task type (instance-specific) skip the task-type level.
    PromptLookup resolve(ComponentKind kind, PromptRole role, const std::optional<PromptSpec>& explicit_spec,
                         const std::optional<std::string>& task_name,
                         const std::optional<TaskType>& task_type) const;

    PromptSpec lookup_prompt(ComponentKind kind, PromptRole role, const std::optional<PromptSpec>& explicit_spec,
                             const std::optional<std::string>& task_name,
                             const std::optional<TaskType>& task_type) const
    {
        return resolve(kind, role, explicit_spec, task_name, task_type).spec;
    }

    bool has(ComponentKind kind, PromptRole role, const std::optional<std::string>& task_name,
             const std::optional<TaskType>& task_type) const;

  private:
    using Slot = std::tuple<int, int, int, std::string>;
    static Slot slot_of(const PromptKey& key);
    std::map<Slot, PromptSpec> entries_;
};

/// Reads a flat JSON object of string values into prompt bindings.
PromptBindings load_prompt_bindings(const std::filesystem::path& file);

}  // namespace arbor
