#include "arbor/builtins.hpp"

#include <mutex>

#include "arbor/domains.hpp"

namespace arbor {

namespace {

template <class T>
PolicyFactory policy()
{
    return [](const ComponentDeps& d) -> std::unique_ptr<Policy> { return std::make_unique<T>(d); };
}

template <class T>
TransitionFactory transition()
{
    return [](const ComponentDeps& d) -> std::unique_ptr<Transition> { return std::make_unique<T>(d); };
}

template <class T>
RewardFactory reward()
{
    return [](const ComponentDeps& d) -> std::unique_ptr<RewardModel> { return std::make_unique<T>(d); };
}

template <class T>
DatasetFactory dataset()
{
    return []() -> std::unique_ptr<Dataset> { return std::make_unique<T>(); };
}

}  // namespace

void register_builtins(ComponentRegistry& r, PromptRegistry& prompts)
{
    using TT = TaskType;
    r.register_policy("concat", TT::language_grounded, policy<ConcatPolicy>());
    r.register_policy("rap", std::nullopt, policy<SubQuestionPolicy>());
    r.register_policy("env_grounded", TT::env_grounded, policy<EnvGroundedPolicy>());
    r.register_policy("tool_use", TT::tool_use, policy<ToolUsePolicy>());

    r.register_transition("concat", TT::language_grounded, transition<ConcatTransition>());
    r.register_transition("rap", std::nullopt, transition<SubQATransition>());
    r.register_transition("tool_use", TT::tool_use, transition<ToolUseTransition>());
    r.register_transition("blocksworld", std::nullopt, transition<blocks::BlocksTransition>());
    r.register_transition("crosswords", std::nullopt, transition<crosswords::CrosswordsTransition>());

    r.register_reward("generative", TT::language_grounded, reward<GenerativePRM>());
    r.register_reward("rap", std::nullopt, [](const ComponentDeps& d) -> std::unique_ptr<RewardModel> {
        return std::make_unique<GenerativePRM>(d, "rap", std::nullopt);
    });
    r.register_reward("env_grounded", TT::env_grounded, reward<EnvGroundedPRM>());
    r.register_reward("lats", TT::tool_use, reward<LatsReward>());

    r.register_dataset("toy-math", TT::language_grounded, dataset<math::MathDataset>());
    r.register_dataset("blocksworld", TT::env_grounded, dataset<blocks::BlocksDataset>());
    r.register_dataset("crosswords", TT::env_grounded, dataset<crosswords::CrosswordsDataset>());
    r.register_dataset("toy-sql", TT::tool_use, dataset<toysql::SqlDataset>());
    r.register_resource("toy-sql", TT::tool_use, [] { return toysql::fixture_resource(); });

    r.register_search("mcts", [] { return std::make_unique<MctsSearch>(); });
    r.register_search("bfs", [] { return std::make_unique<BfsSearch>(); });

    r.register_framework("rap", {"rap", "rap", "rap"});
    r.register_framework("tot", {"concat", "concat", "generative"});

    register_builtin_prompts(prompts);
}

void ensure_builtins()
{
    static std::once_flag once;
    std::call_once(once, [] { register_builtins(global_registry(), global_prompts()); });
}

}  // namespace arbor
