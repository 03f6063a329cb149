#include <gtest/gtest.h>

#include "arbor/builtins.hpp"
#include "arbor/registry.hpp"
#include "support.hpp"

using namespace arbor;
namespace at = arbor::testing;

namespace {

struct Builtins {
    ComponentRegistry registry;
    PromptRegistry prompts;
    Builtins() { register_builtins(registry, prompts); }
};

}  // namespace

TEST(Registry, DefaultsFollowTheDatasetTaskType)
{
    Builtins b;
    const RunAssembly math = b.registry.assemble_run("toy-math");
    EXPECT_EQ(math.describe(), Json::parse(R"({"dataset":"toy-math","task_type":"language_grounded","policy":"concat",
        "transition":"concat","reward":"generative","resource":null})"));
    const RunAssembly blocks = b.registry.assemble_run("blocksworld");
    EXPECT_EQ(blocks.policy->key.name, "env_grounded");
    EXPECT_EQ(blocks.transition->key.name, "blocksworld");
    const RunAssembly sql = b.registry.assemble_run("toy-sql");
    EXPECT_EQ(sql.reward->key.name, "lats");
    ASSERT_NE(sql.resource, nullptr);
}

TEST(Registry, FrameworksAndOverrides)
{
    Builtins b;
    RunOverrides o;
    o.search_framework = "rap";
    const RunAssembly rap = b.registry.assemble_run("toy-math", o);
    EXPECT_EQ(rap.policy->key.name, "rap");
    EXPECT_EQ(rap.transition->key.name, "rap");
    o.reward = "generative";
    EXPECT_EQ(b.registry.assemble_run("toy-math", o).reward->key.name, "generative");
    EXPECT_EQ(b.registry.frameworks(), (std::vector<std::string>{"rap", "tot"}));
}

TEST(Registry, MismatchedTaskTypesAreRejected)
{
    Builtins b;
    RunOverrides o;
    o.transition = "tool_use";
    EXPECT_THROW(b.registry.assemble_run("toy-math", o), AssemblyError);
    // Instance-specific components carry no task type and are not checked.
    o.transition = "blocksworld";
    EXPECT_NO_THROW(b.registry.assemble_run("toy-math", o));
}

TEST(Registry, MissingNamesListWhatExists)
{
    Builtins b;
    try {
        b.registry.resolve(ComponentKind::search, "astar");
        FAIL();
    } catch (const NotFoundError& e) {
        EXPECT_NE(std::string(e.what()).find("bfs, mcts"), std::string::npos);
    }
    EXPECT_THROW(b.registry.assemble_run("nope"), NotFoundError);
    RunOverrides o;
    o.search_framework = "lats";
    EXPECT_THROW(b.registry.assemble_run("toy-math", o), NotFoundError);
}

TEST(Registry, DuplicatesAreRejected)
{
    Builtins b;
    EXPECT_THROW(b.registry.register_search("mcts", [] { return std::unique_ptr<TreeSearch>(); }), RegistrationError);
    EXPECT_THROW(b.registry.register_framework("rap", {"a", "b", "c"}), RegistrationError);
    b.registry.register_policy("mcts", std::nullopt, [](const ComponentDeps&) { return std::unique_ptr<Policy>(); });
    EXPECT_NE(b.registry.find(ComponentKind::policy, "mcts"), nullptr);
}

TEST(Registry, InstantiateBuildsWorkingComponents)
{
    Builtins b;
    ComponentDeps deps;
    deps.backend = std::make_shared<ScriptedBackend>();
    deps.logger = std::make_shared<InferenceLogger>();
    deps.prompts = std::make_shared<PromptRegistry>(b.prompts);
    const Components c = instantiate(b.registry.assemble_run("blocksworld"), deps);
    ASSERT_TRUE(c.policy && c.transition && c.reward);
    EXPECT_EQ(c.transition->name(), "blocksworld");
    EXPECT_TRUE(c.transition->goal_grounded());
}

TEST(Registry, JsonlItems)
{
    at::TempDir dir;
    at::spit(dir / "d.jsonl", "{\"question\": \"q1\", \"answer\": \"a1\"}\n\n{\"question\": \"q2\", \"answer\": 7, "
                                   "\"goals\": \"g\"}\n");
    const auto items = load_jsonl_items(dir / "d.jsonl");
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[1].answer, "7");
    EXPECT_EQ(items[1].goals, "g");
    EXPECT_EQ(apply_limit(items, Json{{"limit", 1}}).size(), 1u);
    EXPECT_EQ(apply_limit(items, Json::object()).size(), 2u);

    at::spit(dir / "bad.jsonl", "{\"question\": \"q\"}\n");
    try {
        load_jsonl_items(dir / "bad.jsonl");
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find(":1: missing \"answer\""), std::string::npos);
    }
    at::spit(dir / "broken.jsonl", "{\"question\": \"q\", \"answer\": \"a\"}\n{oops\n");
    EXPECT_THROW(load_jsonl_items(dir / "broken.jsonl"), DatasetError);
    EXPECT_THROW(load_jsonl_items(dir / "none.jsonl"), DatasetError);
}
