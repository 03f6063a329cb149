#include <benchmark/benchmark.h>

#include <random>

#include "arbor/builtins.hpp"
#include "arbor/domains.hpp"
#include "arbor/search.hpp"
#include "arbor/structures.hpp"

using namespace arbor;

namespace {

State env_trajectory(int steps)
{
    std::mt19937_64 rng(9);
    blocks::Instance inst = blocks::random_instance(rng, 5);
    blocks::BlocksState cur = inst.init;
    std::vector<Step> out;
    for (int i = 0; i < steps; ++i) {
        const auto legal = blocks::legal_actions(cur);
        const std::string& a = legal[rng() % legal.size()];
        cur = blocks::apply(cur, a);
        out.push_back(make_step<EnvStep>(a, blocks::render(cur)));
    }
    return State(StateKind::env, inst.question(), blocks::render(inst.init), std::move(out));
}

void BM_StateRoundTrip(benchmark::State& st)
{
    const State s = env_trajectory(static_cast<int>(st.range(0)));
    for (auto _ : st) {
        const std::string text = dump_json(serialize_state(s));
        benchmark::DoNotOptimize(deserialize_state(Json::parse(text)));
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_StateRoundTrip)->Arg(8)->Arg(64)->Arg(512);

void BM_BlocksDistance(benchmark::State& st)
{
    std::mt19937_64 rng(4);
    const blocks::Instance inst = blocks::random_instance(rng, static_cast<int>(st.range(0)));
    for (auto _ : st) {
        benchmark::DoNotOptimize(blocks::distance_to_goal(inst.init, inst.goal, 8));
    }
}
BENCHMARK(BM_BlocksDistance)->Arg(3)->Arg(4)->Arg(5);

void BM_MctsBlocks(benchmark::State& st)
{
    ensure_builtins();
    auto prompts = std::make_shared<PromptRegistry>();
    register_builtin_prompts(*prompts);
    std::mt19937_64 rng(2024);
    const blocks::Instance inst = blocks::random_instance(rng, 4);
    const Task task{0, inst.question(), blocks::render_goal(inst.goal)};
    SearchConfig cfg;
    cfg.n_iterations = static_cast<int>(st.range(0));
    cfg.n_actions = 3;
    cfg.max_depth = 6;
    for (auto _ : st) {
        auto backend = std::make_shared<ScriptedBackend>();
        backend->set_responder(blocks::make_responder(Flavor::adversarial));
        ComponentDeps deps;
        deps.backend = backend;
        deps.prompts = prompts;
        deps.task_name = "blocksworld";
        Components c = instantiate(global_registry().assemble_run("blocksworld"), deps);
        MctsSearch mcts;
        benchmark::DoNotOptimize(run_search(mcts, SearchContext::from(c, task, cfg)));
    }
}
BENCHMARK(BM_MctsBlocks)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
