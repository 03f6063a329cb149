#pragma once

#include "arbor/prompts.hpp"
#include "arbor/registry.hpp"

namespace arbor {

/// Registers the built-in components, datasets, tool resources, search
/// engines, frameworks and default prompts.
///
/// Policies: concat, rap, env_grounded, tool_use.
/// Transitions: concat, rap, tool_use, blocksworld, crosswords.
/// Rewards: generative, rap, env_grounded, lats.
/// Datasets: toy-math, blocksworld, crosswords, toy-sql.
/// Searches: mcts, bfs. Frameworks: rap, tot.
void register_builtins(ComponentRegistry& registry, PromptRegistry& prompts);

/// Registers the built-ins into the global registries once.
void ensure_builtins();

}  // namespace arbor
