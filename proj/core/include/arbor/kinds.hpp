#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace arbor {

enum class ComponentKind { policy, transition, reward, dataset, resource, search };

/// Task families a component is written for. Components without a task type
/// are specific to one task instance.
enum class TaskType { language_grounded, env_grounded, tool_use };

std::string_view to_string(ComponentKind kind);
std::string_view to_string(TaskType type);
std::optional<ComponentKind> component_kind_from_string(std::string_view s);
std::optional<TaskType> task_type_from_string(std::string_view s);

}  // namespace arbor
