// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "arbor/builtins.hpp"
#include "arbor/cli.hpp"
#include "arbor/domains.hpp"
#include "arbor/persistence.hpp"
#include "support.hpp"

using namespace arbor;
using namespace arbor::testing;

namespace {

// Pinned tolerances and budgets.
constexpr double kExact = 1e-12;
constexpr double kTemperatureTol = 1e-9;
constexpr double kRoundTripBudgetS = 5.0;
constexpr double kMctsBudgetS = 60.0;
constexpr double kMinCitReduction = 0.5;
constexpr int kRoundTripStates = 1200;
constexpr int kBlocksInstances = 20;
constexpr int kEnsembleCases = 500;
constexpr int kDiversityEntries = 10000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<PromptRegistry> builtin_prompts()
{
    auto p = std::make_shared<PromptRegistry>();
    register_builtin_prompts(*p);
    return p;
}

int run_cli_quiet(const std::vector<std::string>& args, const CliHooks& hooks = {}, std::string* out_text = nullptr)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err, hooks);
    if (out_text) {
        *out_text = out.str();
    }
    return code;
}

// ---------------------------------------------------------------------------
// 1. Serialization round trip
// ---------------------------------------------------------------------------

Outcome serialization_round_trip()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1234);
    std::set<std::string> step_tags, action_tags;
    int error_steps = 0;
    for (int i = 0; i < kRoundTripStates; ++i) {
        const State s = random_state(rng);
        for (const auto& st : s.steps()) {
            step_tags.insert(std::string(st->type_tag()));
            error_steps += st->has_error();
            if (auto* c = step_as<ConcatStep>(st)) {
                action_tags.insert(std::string(c->action->type_tag()));
            }
        }
        const std::string text = dump_json(serialize_state(s));
        const State back = deserialize_state(Json::parse(text));
        if (!(back == s) || dump_json(serialize_state(back)) != text) {
            return {false, "state " + std::to_string(i) + " did not survive a round trip"};
        }
    }
    if (step_tags.size() != 4 || action_tags.size() != 4 || error_steps == 0) {
        return {false, "generator missed a variant"};
    }

    // Error checkpoint from a crossword attempt with a six-letter word.
    TempDir dir;
    RunDirectory run(dir.path());
    run.prepare();
    ComponentDeps deps;
    crosswords::CrosswordsTransition t(deps);
    const Task task{0, "AGEND\nWIRER\nALOFT\nRAVEN\nEMBER", "AGENDWIRERALOFTRAVENEMBER"};
    State s = t.init_state(task);
    for (const char* move : {"h1. tasks", "v1. AWARE", "h3. AROUSE"}) {
        s.append(t.step(s, make_action<EnvAction>(move), task));
    }
    write_chain_artifacts(run, 0, s);
    const std::string produced = slurp(run.chain_checkpoint(0));
    const std::string golden = slurp(fs::path(ARBOR_GOLDEN_DIR) / "error_checkpoint.json");
    if (produced != golden) {
        return {false, "error checkpoint differs from the golden file"};
    }
    if (!(read_chain_checkpoint(run, 0) == s)) {
        return {false, "error checkpoint did not read back"};
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream d;
    d << kRoundTripStates << " states, 4 step and 4 action variants, " << error_steps
      << " error steps, golden match, " << elapsed << " s";
    return {elapsed < kRoundTripBudgetS, d.str()};
}

// ---------------------------------------------------------------------------
// 2. Prompt fallback order
// ---------------------------------------------------------------------------

Outcome prompt_fallback()
{
    const std::string task_name = "fixture-task";
    const TaskType type = TaskType::env_grounded;
    const std::vector<std::string> level_text{"explicit", "task-name", "task-type", "default"};
    int checked = 0;
    for (int mask = 0; mask < 16; ++mask) {
        const bool has[4] = {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
        PromptRegistry reg;
        if (has[1]) {
            reg.register_prompt({ComponentKind::policy, PromptRole::usr_prompt, std::nullopt, task_name},
                                PromptSpec::make(ComponentKind::policy, PromptRole::usr_prompt, "task-name"));
        }
        if (has[2]) {
            reg.register_prompt({ComponentKind::policy, PromptRole::usr_prompt, type, std::nullopt},
                                PromptSpec::make(ComponentKind::policy, PromptRole::usr_prompt, "task-type"));
        }
        if (has[3]) {
            reg.register_prompt({ComponentKind::policy, PromptRole::usr_prompt, std::nullopt, std::nullopt},
                                PromptSpec::make(ComponentKind::policy, PromptRole::usr_prompt, "default"));
        }
        std::optional<PromptSpec> explicit_spec;
        if (has[0]) {
            explicit_spec = PromptSpec::make(ComponentKind::policy, PromptRole::usr_prompt, "explicit");
        }
        for (bool typed : {true, false}) {
            // Expected: first present level, with the task-type level invisible
            // to instance-specific components.
            std::optional<std::string> expected;
            for (int level = 0; level < 4 && !expected; ++level) {
                if (has[level] && (typed || level != 2)) {
                    expected = level_text[static_cast<std::size_t>(level)];
                }
            }
            std::optional<std::string> got;
            try {
                got = reg.resolve(ComponentKind::policy, PromptRole::usr_prompt, explicit_spec, task_name,
                                  typed ? std::optional<TaskType>(type) : std::nullopt)
                          .spec.template_text;
            } catch (const PromptError&) {
            }
            if (got != expected) {
                return {false, "mask " + std::to_string(mask) + (typed ? " typed" : " instance-specific") +
                                   ": expected " + expected.value_or("<error>") + ", got " +
                                   got.value_or("<error>")};
            }
            ++checked;
        }
    }
    return {true, std::to_string(checked) + " lookups over 16 presence combinations"};
}

// ---------------------------------------------------------------------------
// 3. Linear degeneration
// ---------------------------------------------------------------------------

ScriptedBackend::Responder five_step_responder()
{
    return [](const GenerationRequest& req, std::size_t) -> std::optional<std::string> {
        if (req.user_text.find("Rate how useful") != std::string::npos) {
            return "Score: 0.8";
        }
        std::smatch m;
        if (std::regex_search(req.user_text, m, std::regex(R"(Write step (\d+))"))) {
            const int k = std::stoi(m[1]);
            if (k >= 5) {
                return "Step 5: The answer is 42.";
            }
            return "Step " + std::to_string(k) + ": partial result " + std::to_string(k * 7);
        }
        return std::nullopt;
    };
}

struct LanguageRig {
    std::shared_ptr<ScriptedBackend> backend;
    std::shared_ptr<InferenceLogger> logger = std::make_shared<InferenceLogger>();
    ComponentDeps deps;
    Components c;
};

LanguageRig language_rig(ScriptedBackend::Responder responder)
{
    LanguageRig r;
    r.backend = std::make_shared<ScriptedBackend>();
    r.backend->set_responder(std::move(responder));
    r.deps.backend = r.backend;
    r.deps.logger = r.logger;
    r.deps.prompts = builtin_prompts();
    r.deps.task_name = "five-steps";
    r.c.tracker = r.deps.tracker;
    r.c.policy = std::make_unique<ConcatPolicy>(r.deps);
    r.c.transition = std::make_unique<ConcatTransition>(r.deps);
    r.c.reward = std::make_unique<GenerativePRM>(r.deps);
    r.c.policy->bind_transition(*r.c.transition);
    return r;
}

long long count_component(const InferenceLogger& log, const std::string& prefix)
{
    long long n = 0;
    for (const auto& r : log.records()) {
        n += r.component.rfind(prefix, 0) == 0;
    }
    return n;
}

Outcome linear_degeneration()
{
    const Task task{0, "Compute the product of six and seven.", ""};
    LanguageRig chain = language_rig(five_step_responder());
    const ChainResult cr = run_chain(*chain.c.policy, *chain.c.transition, *chain.c.tracker, task, 10);
    const std::string chain_text = dump_json(serialize_state(cr.state));

    std::ostringstream d;
    bool ok = cr.state.size() == 5 && cr.success;
    for (const char* engine : {"bfs", "mcts"}) {
        LanguageRig rig = language_rig(five_step_responder());
        SearchConfig cfg;
        cfg.n_actions = 1;
        cfg.bn_threshold = 0.0;
        cfg.n_iterations = 1;
        cfg.max_depth = 10;
        cfg.rollout_depth = 10;
        SearchContext ctx = SearchContext::from(rig.c, task, cfg);
        std::unique_ptr<TreeSearch> search;
        if (std::string(engine) == "bfs") {
            search = std::make_unique<BfsSearch>();
        } else {
            search = std::make_unique<MctsSearch>();
        }
        const SearchResult r = run_search(*search, ctx);
        const long long calls = count_component(*rig.logger, "policy:");
        const std::string text = dump_json(serialize_state(r.tree.node(r.best_path.back()).state));
        const bool same = text == chain_text;
        ok = ok && r.tree.size() == 6 && calls == 5 && r.policy_calls == 5 && same;
        d << engine << ": " << r.tree.size() << " nodes, " << calls << " policy calls, trajectory "
          << (same ? "byte-equal" : "DIFFERENT") << "; ";
    }
    return {ok, d.str() + "chain steps " + std::to_string(cr.state.size())};
}

// ---------------------------------------------------------------------------
// 4 and 5. Block stacking with MCTS
// ---------------------------------------------------------------------------

struct BlocksRig {
    std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
    Components c;
};

BlocksRig blocks_rig(Flavor flavor)
{
    ensure_builtins();
    BlocksRig r;
    r.backend->set_responder(blocks::make_responder(flavor));
    ComponentDeps deps;
    deps.backend = r.backend;
    deps.prompts = builtin_prompts();
    deps.task_name = "blocksworld";
    r.c = instantiate(global_registry().assemble_run("blocksworld"), deps);
    return r;
}

std::vector<blocks::Instance> blocks_instances()
{
    std::mt19937_64 rng(2024);
    std::vector<blocks::Instance> out;
    for (int i = 0; i < kBlocksInstances; ++i) {
        out.push_back(blocks::random_instance(rng, 3 + i % 2));
    }
    return out;
}

SearchConfig reference_mcts_config()
{
    SearchConfig cfg;
    cfg.n_iterations = 10;
    cfg.n_actions = 3;
    cfg.max_depth = 6;
    cfg.early_terminate = true;
    return cfg;
}

Outcome mcts_oracle()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto instances = blocks_instances();
    int solvable = 0, mcts_solved = 0, chain_solved = 0, missed = 0;
    for (int i = 0; i < kBlocksInstances; ++i) {
        const auto& inst = instances[static_cast<std::size_t>(i)];
        const Task task{i, inst.question(), blocks::render_goal(inst.goal)};
        const bool oracle = oracle_blocks_distance(blocks::render(inst.init), task.goals, 6).has_value();
        solvable += oracle;

        BlocksRig m = blocks_rig(Flavor::adversarial);
        MctsSearch mcts;
        const SearchResult r = run_search(mcts, SearchContext::from(m.c, task, reference_mcts_config()));
        mcts_solved += r.success;
        missed += oracle && !r.success;

        BlocksRig g = blocks_rig(Flavor::adversarial);
        chain_solved += env_chain(g.c, task, 6).success;
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream d;
    d << "oracle-solvable " << solvable << "/" << kBlocksInstances << ", MCTS " << mcts_solved << ", adversarial chain "
      << chain_solved << ", " << elapsed << " s";
    return {missed == 0 && mcts_solved > chain_solved && elapsed < kMctsBudgetS, d.str()};
}

Outcome mcts_bookkeeping()
{
    const auto instances = blocks_instances();
    int checkpoints = 0;
    for (int i = 0; i < 5; ++i) {
        const auto& inst = instances[static_cast<std::size_t>(i)];
        const Task task{i, inst.question(), blocks::render_goal(inst.goal)};
        TempDir dir;
        RunDirectory run(dir.path());
        run.prepare();
        SearchCheckpointWriter sink(run, task.question);
        BlocksRig m = blocks_rig(Flavor::adversarial);
        SearchConfig cfg = reference_mcts_config();
        cfg.early_terminate = false;
        SearchContext ctx = SearchContext::from(m.c, task, cfg);
        ctx.sink = &sink;
        const SearchResult r = run_search(*std::make_unique<MctsSearch>(), ctx);
        if (r.iterations != cfg.n_iterations || r.tree.root().visits != cfg.n_iterations) {
            return {false, "instance " + std::to_string(i) + ": root visits " +
                               std::to_string(r.tree.root().visits) + " after " + std::to_string(r.iterations) +
                               " iterations"};
        }
        for (int it = 0; it < cfg.n_iterations; ++it) {
            const Json doc = read_json(run.iteration_checkpoint(i, it));
            const Tree tree = deserialize_tree(doc.at("tree"));
            ++checkpoints;
            if (tree.root().visits != it + 1) {
                return {false, "root visits " + std::to_string(tree.root().visits) + " at iteration " +
                                   std::to_string(it)};
            }
            for (const Node& n : tree.nodes()) {
                int below = n.simulations;
                for (NodeId k : n.child_ids) {
                    below += tree.node(k).visits;
                }
                if (below != n.visits) {
                    return {false, "node " + std::to_string(n.id) + " visits " + std::to_string(n.visits) +
                                       " != " + std::to_string(below) + " at iteration " + std::to_string(it)};
                }
            }
        }
    }
    return {true, std::to_string(checkpoints) + " checkpoints: root visits = iteration count, visits conserved"};
}

// ---------------------------------------------------------------------------
// 6. BFS beam
// ---------------------------------------------------------------------------

SearchResult run_toy(const ToyTree& tree, SearchConfig cfg, TreeSearch& engine)
{
    ComponentDeps deps;
    Components c;
    c.tracker = deps.tracker;
    c.policy = std::make_unique<ToyPolicy>(deps, &tree);
    c.transition = std::make_unique<ToyTransition>(deps, &tree);
    c.reward = std::make_unique<ToyReward>(deps, &tree);
    return run_search(engine, SearchContext::from(c, Task{0, "toy", ""}, cfg));
}

std::vector<std::vector<std::string>> expanded_by_depth(const Tree& tree, int max_depth)
{
    std::vector<std::vector<std::string>> out(static_cast<std::size_t>(max_depth));
    for (const Node& n : tree.nodes()) {
        if (n.expanded()) {
            out[static_cast<std::size_t>(n.depth)].push_back(toy_key(n.state));
        }
    }
    return out;
}

ToyTree trap_tree()
{
    ToyTree t;
    t[""] = {0.0, false, {"a", "b"}};
    t["a"] = {0.9, false, {"a1", "a2"}};
    t["b"] = {0.6, false, {"b1"}};
    t["a/a1"] = {0.5, false, {}};
    t["a/a2"] = {0.4, false, {}};
    t["b/b1"] = {0.3, true, {}};
    return t;
}

Outcome bfs_beam()
{
    const ToyTree trap = trap_tree();
    SearchConfig cfg;
    cfg.n_actions = 2;
    cfg.max_depth = 2;
    BfsSearch bfs;
    cfg.beam_width = 1;
    const SearchResult narrow = run_toy(trap, cfg, bfs);
    cfg.beam_width = 2;
    const SearchResult wide = run_toy(trap, cfg, bfs);
    const bool reachable = oracle_goal_reachable(trap, 2);
    const bool counterexample = reachable && !narrow.success && wide.success &&
                                !oracle_beam(trap, 1, 2).goal_found && oracle_beam(trap, 2, 2).goal_found;

    std::mt19937_64 rng(99);
    int trees = 0;
    for (int i = 0; i < 200; ++i) {
        const ToyTree t = random_toy_tree(rng, 4, 3);
        for (int beam = 1; beam <= 3; ++beam) {
            SearchConfig c;
            c.n_actions = 3;
            c.max_depth = 4;
            c.beam_width = beam;
            const SearchResult r = run_toy(t, c, bfs);
            auto got = expanded_by_depth(r.tree, 4);
            BeamTrace want = oracle_beam(t, beam, 4);
            for (std::size_t d = 0; d < got.size(); ++d) {
                std::sort(got[d].begin(), got[d].end());
                std::sort(want.expanded[d].begin(), want.expanded[d].end());
            }
            for (std::size_t d = 1; d < got.size(); ++d) {
                if (static_cast<int>(got[d].size()) > beam) {
                    return {false, "frontier of " + std::to_string(got[d].size()) + " at depth " +
                                       std::to_string(d) + " with beam " + std::to_string(beam)};
                }
            }
            if (got != want.expanded || r.success != want.goal_found) {
                return {false, "tree " + std::to_string(i) + " beam " + std::to_string(beam) +
                                   " disagrees with the beam oracle"};
            }
            ++trees;
        }
    }
    return {counterexample, "counterexample: beam 1 " + std::string(narrow.success ? "finds" : "misses") +
                                " the goal leaf, beam 2 " + (wide.success ? "finds" : "misses") + " it; " +
                                std::to_string(trees) + " random runs within beam and equal to the oracle"};
}

// ---------------------------------------------------------------------------
// 7. Ensemble
// ---------------------------------------------------------------------------

Outcome ensemble()
{
    std::mt19937_64 rng(7);
    const std::vector<std::string> alphabet{"12", "7", "3/4", "-1", "x", "12.0"};
    ComponentDeps deps;
    ConcatTransition concat(deps);
    for (int i = 0; i < kEnsembleCases; ++i) {
        const int n = std::uniform_int_distribution<int>(1, 15)(rng);
        const int k = std::uniform_int_distribution<int>(1, static_cast<int>(alphabet.size()))(rng);
        std::vector<std::string> answers;
        Tree tree;
        tree.add_root(State(StateKind::concat, "q", "q"));
        std::vector<NodeId> terminals;
        for (int j = 0; j < n; ++j) {
            const std::string a = alphabet[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)];
            answers.push_back(a);
            State s(StateKind::concat, "q", "q");
            s.append(make_step<ConcatStep>(make_action<TextAction>("So the answer is " + a)));
            terminals.push_back(tree.add_child(0, s));
        }
        const std::string want = brute_force_mode(answers);
        if (majority_vote(answers) != want || to_ensemble(tree, terminals, concat) != want) {
            return {false, "case " + std::to_string(i) + " disagrees with the brute-force mode " + want};
        }
    }

    // Halting at n_terminate on a tree with 27 leaves.
    ToyTree wide;
    wide[""] = {0.0, false, {"a", "b", "c"}};
    for (std::string x : {"a", "b", "c"}) {
        wide[x] = {0.5, false, {"a", "b", "c"}};
        for (std::string y : {"a", "b", "c"}) {
            wide[x + "/" + y] = {0.5, false, {"a", "b", "c"}};
            for (std::string z : {"a", "b", "c"}) {
                wide[x + "/" + y + "/" + z] = {0.5, false, {}};
            }
        }
    }
    int runs = 0;
    for (int k = 1; k <= 12; ++k) {
        for (int engine = 0; engine < 2; ++engine) {
            SearchConfig cfg;
            cfg.n_actions = 3;
            cfg.max_depth = 3;
            cfg.n_iterations = 40;
            cfg.n_terminate = k;
            cfg.beam_width = 9;
            BfsSearch bfs;
            MctsSearch mcts;
            const SearchResult r = run_toy(wide, cfg, engine == 0 ? static_cast<TreeSearch&>(bfs) : mcts);
            long long terminal_nodes = 0;
            for (const Node& n : r.tree.nodes()) {
                terminal_nodes += n.is_terminal;
            }
            if (static_cast<int>(r.terminals.size()) != k || terminal_nodes != k) {
                return {false, std::string(engine == 0 ? "bfs" : "mcts") + " n_terminate " + std::to_string(k) +
                                   " produced " + std::to_string(terminal_nodes) + " terminals"};
            }
            ++runs;
        }
    }
    return {true, std::to_string(kEnsembleCases) + " multisets match the brute-force mode; " + std::to_string(runs) +
                      " runs halt at exactly n_terminate"};
}

// ---------------------------------------------------------------------------
// 8. CiT efficiency
// ---------------------------------------------------------------------------

struct CitRun {
    bool success = false;
    long long policy_calls = 0;
};

CitRun cit_run(bool gated)
{
    auto responder = [](const GenerationRequest& req, std::size_t hit) -> std::optional<std::string> {
        std::smatch m;
        if (!std::regex_search(req.user_text, m, std::regex(R"(Write step (\d+))"))) {
            return std::nullopt;
        }
        const std::string k = m[1];
        const bool decision = k == "4" || k == "8";
        static const char* plain[] = {"main", "side", "spare"};
        static const char* fork[] = {"dead end", "main", "side"};
        return "Step " + k + ": " + (decision ? fork : plain)[hit % 3] + " " + k;
    };
    auto backend = std::make_shared<ScriptedBackend>();
    backend->set_responder(responder);
    auto logger = std::make_shared<InferenceLogger>();
    ComponentDeps deps;
    deps.backend = backend;
    deps.logger = logger;
    deps.prompts = builtin_prompts();
    auto dead = [](const State& s) {
        return std::any_of(s.steps().begin(), s.steps().end(),
                           [](const Step& st) { return st->render().find("dead end") != std::string::npos; });
    };
    Components c;
    c.tracker = deps.tracker;
    c.policy = std::make_unique<ConcatPolicy>(deps);
    c.transition = std::make_unique<ScriptTransition>(deps, [dead](const State& s) {
        if (dead(s)) {
            return GoalStatus{true, false};
        }
        const bool finished = s.size() >= 10;
        return GoalStatus{finished, finished};
    });
    c.reward = std::make_unique<ScriptReward>(deps, [](const State&, const Step& st) {
        const std::string r = st->render();
        return r.find("dead end") != std::string::npos ? 0.0 : r.find("main") != std::string::npos ? 0.9 : 0.5;
    });
    c.policy->bind_transition(*c.transition);
    SearchConfig cfg;
    cfg.n_actions = 3;
    cfg.beam_width = 1;
    cfg.max_depth = 10;
    if (gated) {
        cfg.bn_threshold = 0.5;
    }
    SearchContext ctx = SearchContext::from(c, Task{0, "Walk ten steps.", ""}, cfg);
    // Flags the states right before steps 4 and 8.
    ctx.cit_evaluator = [](const State& s) { return s.size() == 3 || s.size() == 7 ? 1.0 : 0.0; };
    BfsSearch bfs;
    const SearchResult r = run_search(bfs, ctx);
    return {r.success, count_component(*logger, "policy:")};
}

Outcome cit_efficiency()
{
    const CitRun full = cit_run(false);
    const CitRun gated = cit_run(true);
    const double reduction = 1.0 - static_cast<double>(gated.policy_calls) / static_cast<double>(full.policy_calls);
    std::ostringstream d;
    d << "policy calls " << full.policy_calls << " full vs " << gated.policy_calls << " gated (" << reduction * 100
      << "% fewer), success " << full.success << "/" << gated.success;
    return {full.success && gated.success && reduction >= kMinCitReduction, d.str()};
}

// ---------------------------------------------------------------------------
// 9. Artifact layout
// ---------------------------------------------------------------------------

Outcome artifact_layout()
{
    TempDir dir;
    const fs::path search_dir = dir / "search";
    const fs::path chain_dir = dir / "chain";
    const int n_queries = 2, iterations = 3;
    const int sc = run_cli_quiet({"search", "--dataset", "blocksworld", "--limit", std::to_string(n_queries),
                                  "--save_dir", search_dir.string(), "--n_iterations", std::to_string(iterations)});
    const int cc = run_cli_quiet(
        {"chain", "--dataset", "blocksworld", "--limit", std::to_string(n_queries), "--save_dir", chain_dir.string()});
    if (sc != 0 || cc != 0) {
        return {false, "runs exited with " + std::to_string(sc) + " and " + std::to_string(cc)};
    }
    std::set<std::string> want_search{"config.json", "execution.log", "eval.log", "inferencelogger.log",
                                      "treetojsonl.jsonl"};
    std::set<std::string> want_chain{"config.json", "execution.log", "eval.log", "inferencelogger.log",
                                     "eval_results.json"};
    for (int q = 0; q < n_queries; ++q) {
        const std::string qs = std::to_string(q);
        for (int i = 0; i < iterations; ++i) {
            want_search.insert("checkpoints/" + qs + "_" + std::to_string(i) + ".json");
        }
        want_search.insert("checkpoints/" + qs + "_result.json");
        want_search.insert("terminal_nodes/terminal_nodes_" + qs + ".json");
        want_chain.insert("checkpoints/" + qs + ".json");
    }
    const auto got_search = list_files(search_dir);
    const auto got_chain = list_files(chain_dir);
    auto diff = [](const std::set<std::string>& want, const std::set<std::string>& got) {
        std::string s;
        for (const auto& f : want) {
            if (!got.count(f)) {
                s += " missing " + f;
            }
        }
        for (const auto& f : got) {
            if (!want.count(f)) {
                s += " extra " + f;
            }
        }
        return s;
    };
    const std::string ds = diff(want_search, got_search), dc = diff(want_chain, got_chain);
    if (!ds.empty() || !dc.empty()) {
        return {false, "search:" + ds + " chain:" + dc};
    }
    return {true, "search run " + std::to_string(got_search.size()) + " files, chain run " +
                      std::to_string(got_chain.size()) + " files, exact match"};
}

// ---------------------------------------------------------------------------
// 10. Resume
// ---------------------------------------------------------------------------

Outcome resume_equivalence()
{
    ensure_builtins();
    TempDir dir;
    // The distance-6 instance needs all five allowed steps.
    const auto items = blocks::BlocksDataset().load(Json::object());
    const DatasetItem& item = items.at(3);
    const fs::path data = dir / "item.jsonl";
    spit(data, Json{{"question", item.question}, {"answer", item.answer}, {"goals", item.goals}}.dump() + "\n");

    CliHooks base;
    base.log_clock = [] { return 1700000000000LL; };
    auto args = [&](const fs::path& save, bool resume) {
        std::vector<std::string> a{"chain", "--dataset", "blocksworld", "--data_file", data.string(),
                                   "--max_steps", "5", "--save_dir", save.string()};
        if (resume) {
            a.push_back("--resume");
        }
        return a;
    };
    const fs::path whole = dir / "whole", cut = dir / "cut";
    if (run_cli_quiet(args(whole, false), base) != 0) {
        return {false, "uninterrupted run failed"};
    }
    CliHooks interrupting = base;
    interrupting.after_step = [](int, const State& s) {
        if (s.size() == 2) {
            throw std::runtime_error("interrupted");
        }
    };
    const int first = run_cli_quiet(args(cut, false), interrupting);
    const State partial = resume_chain(RunDirectory(cut), 0);
    const int second = run_cli_quiet(args(cut, true), base);
    if (first == 0 || partial.size() != 2 || second != 0) {
        return {false, "interruption did not behave as expected"};
    }
    auto files = list_files(whole);
    files.erase("execution.log");
    if (files != [&] {
            auto f = list_files(cut);
            f.erase("execution.log");
            return f;
        }()) {
        return {false, "file sets differ"};
    }
    for (const auto& f : files) {
        if (slurp(whole / f) != slurp(cut / f)) {
            return {false, f + " differs after resume"};
        }
    }
    const State final_state = resume_chain(RunDirectory(whole), 0);
    return {final_state.size() == 5, "interrupted after step 2 of " + std::to_string(final_state.size()) + "; " +
                                         std::to_string(files.size()) + " artifacts byte-identical"};
}

// ---------------------------------------------------------------------------
// 11. Accounting
// ---------------------------------------------------------------------------

Outcome accounting()
{
    ensure_builtins();
    TempDir dir;
    const auto items = blocks::BlocksDataset().load(Json::object());
    auto backend = std::make_shared<ScriptedBackend>("mock");
    backend->set_responder(mock_responder("blocksworld", items));
    backend->set_latency_ms(0.5);
    CliHooks hooks;
    hooks.backend = backend;
    const int code = run_cli_quiet({"search", "--dataset", "blocksworld", "--save_dir", (dir / "run").string(),
                                    "--workers", "3", "--n_iterations", "4"},
                                   hooks);
    if (code != 0) {
        return {false, "search exited with " + std::to_string(code)};
    }
    const auto records = InferenceLogger::read_file(RunDirectory(dir / "run").inference_log());
    const UsageTotals total = grand_total(records);
    const UsageTotals emitted = backend->emitted_usage();
    if (!(total == emitted)) {
        return {false, "logged " + std::to_string(total.calls) + " calls vs " + std::to_string(emitted.calls) +
                           " emitted"};
    }
    for (GroupBy by : {GroupBy::component, GroupBy::instance, GroupBy::phase}) {
        const auto groups = aggregate(records, by);
        UsageTotals sum;
        for (const auto& [key, g] : groups) {
            sum.prompt_tokens += g.prompt_tokens;
            sum.completion_tokens += g.completion_tokens;
            sum.latency_ms += g.latency_ms;
            sum.calls += g.calls;
        }
        if (!(sum == total) || !(sum_groups(groups) == total)) {
            return {false, "a grouping does not partition the total"};
        }
    }
    std::ostringstream d;
    d << total.calls << " calls, " << total.prompt_tokens << "+" << total.completion_tokens
      << " tokens equal backend usage; component, instance and phase groups partition the total";
    return {true, d.str()};
}

// ---------------------------------------------------------------------------
// 12. Diversity report
// ---------------------------------------------------------------------------

bool close(double a, double b, double tol = kExact)
{
    return std::fabs(a - b) <= tol;
}

double percent1(double x)
{
    return std::round(x * 1000.0) / 10.0;
}

Outcome diversity()
{
    std::mt19937_64 rng(5);
    std::vector<PolicyCall> log;
    for (int i = 0; i < kDiversityEntries; ++i) {
        const int state = std::uniform_int_distribution<int>(0, 299)(rng);
        const int out = std::uniform_int_distribution<int>(0, 40)(rng);
        log.push_back({"s" + std::to_string(state), "o" + std::to_string(out), out < 6});
    }
    const DiversityReport got = diversity_report(log);
    const BruteDiversity want = brute_force_diversity(log);
    if (got.unique_states != want.unique_states || !close(got.duplicate_rate, want.duplicate_rate) ||
        !close(got.duplicate_rate_incorrect, want.duplicate_rate_incorrect) ||
        !close(got.correct_fraction, want.correct_fraction) ||
        !close(got.avg_policy_calls_per_state, want.avg_calls_per_state)) {
        return {false, "streaming report differs from brute force"};
    }
    const Json j = to_json(got);
    for (const char* key : {"unique_states", "avg_policy_calls_per_state", "duplicate_rate",
                            "duplicate_rate_incorrect", "correct_fraction"}) {
        if (!j.contains(key)) {
            return {false, std::string("report lacks ") + key};
        }
    }

    // A 127-call log shaped like the published crossword table.
    std::vector<PolicyCall> table;
    for (int s = 0; s < 16; ++s) {
        table.push_back({"s" + std::to_string(s), "w" + std::to_string(s), false});
    }
    for (int s = 0; s < 4; ++s) {
        table.push_back({"s" + std::to_string(s), "x" + std::to_string(s), false});
        table.push_back({"s" + std::to_string(s), "c" + std::to_string(s), true});
    }
    for (int i = 0; i < 85; ++i) {
        table.push_back({"s" + std::to_string(i % 16), "w" + std::to_string(i % 16), false});
    }
    for (int i = 0; i < 18; ++i) {
        table.push_back({"s" + std::to_string(i % 4), "c" + std::to_string(i % 4), true});
    }
    const DiversityReport t = diversity_report(table);
    const bool table_ok = t.unique_states == 16 && close(std::round(t.avg_policy_calls_per_state * 10) / 10, 7.9) &&
                          close(percent1(t.duplicate_rate), 81.1) && close(percent1(t.duplicate_rate_incorrect), 81.0) &&
                          close(percent1(t.correct_fraction), 17.3);
    std::ostringstream d;
    d << kDiversityEntries << " entries match brute force (duplicate rate " << got.duplicate_rate
      << "); table-shaped log gives 16 states, " << percent1(t.duplicate_rate) << "% / "
      << percent1(t.duplicate_rate_incorrect) << "% duplicates, " << percent1(t.correct_fraction) << "% correct";
    return {table_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 13. Temperature escalation
// ---------------------------------------------------------------------------

class RecordingBackend final : public LlmBackend {
  public:
    GenerationResponse generate(const GenerationRequest& request) override
    {
        std::lock_guard lock(mu_);
        temperatures.push_back(request.temperature);
        GenerationResponse r;
        r.text = "Step 1: the same idea again";
        r.model_id = "recording";
        return r;
    }
    std::string model_id() const override { return "recording"; }
    std::vector<double> temperatures;

  private:
    std::mutex mu_;
};

Outcome temperature()
{
    TemperatureSchedule s;
    std::vector<double> seq{s.current};
    for (int i = 0; i < 4; ++i) {
        s = escalate_on_duplicate(s, true);
        seq.push_back(s.current);
    }
    const std::vector<double> want{0.8, 1.0, 1.2, 1.2, 1.2};
    bool ok = seq.size() == want.size();
    for (std::size_t i = 0; ok && i < want.size(); ++i) {
        ok = close(seq[i], want[i], kTemperatureTol);
    }
    ok = ok && close(escalate_on_duplicate(s, false).current, 1.2, kTemperatureTol);

    // Through a policy whose model keeps repeating itself.
    auto backend = std::make_shared<RecordingBackend>();
    ComponentDeps deps;
    deps.backend = backend;
    deps.prompts = builtin_prompts();
    ConcatPolicy policy(deps);
    policy.get_actions(State(StateKind::concat, "q", "q"), 3, Task{0, "q", ""});
    const std::vector<double> sampled{0.8, 0.8, 1.0, 1.2, 1.2, 1.2};
    bool policy_ok = backend->temperatures.size() == sampled.size();
    for (std::size_t i = 0; policy_ok && i < sampled.size(); ++i) {
        policy_ok = close(backend->temperatures[i], sampled[i], kTemperatureTol);
    }
    std::ostringstream d;
    d << "schedule";
    for (double x : seq) {
        d << " " << x;
    }
    d << "; policy sampled at";
    for (double x : backend->temperatures) {
        d << " " << x;
    }
    return {ok && policy_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 14. Tool-use loop
// ---------------------------------------------------------------------------

Outcome tool_use()
{
    ensure_builtins();
    const auto resource = toysql::fixture_resource();
    const ToolSpec* tool = resource->find("query_sql");
    int observations = 0;
    for (const Json& bad : {Json::object(), Json{{"sql", "SELECT v FROM t"}}, Json{{"query", 5}},
                            Json{{"query", "DROP TABLE t"}}, Json::array({1, 2}), Json("text")}) {
        try {
            const std::string obs = run_tool(*tool, bad);
            observations += !obs.empty();
        } catch (...) {
            return {false, "run_tool threw on " + bad.dump()};
        }
    }

    TempDir dir;
    const fs::path save = dir / "run";
    const int code = run_cli_quiet({"chain", "--dataset", "toy-sql", "--mock_flavor", "adversarial", "--max_steps", "6",
                                    "--save_dir", save.string()});
    if (code != 0) {
        return {false, "chain exited with " + std::to_string(code)};
    }
    RunDirectory run(save);
    const Json results = read_json(run.eval_results());
    bool saw_validation = false;
    for (int q : chain_query_indices(run)) {
        const State trajectory = resume_chain(run, q);
        for (const auto& st : trajectory.steps()) {
            if (auto* ts = step_as<ToolStep>(st); ts && ts->observation &&
                                                  ts->observation->rfind("validation error", 0) == 0) {
                saw_validation = true;
            }
        }
    }
    const std::string before_results = slurp(run.eval_results());
    const std::string before_log = slurp(run.inference_log());
    const std::string before_ckpt = slurp(run.chain_checkpoint(0));
    std::string printed;
    const int eval_code = run_cli_quiet({"eval", "--save_dir", save.string()}, {}, &printed);
    const bool reproduced = eval_code == 0 && slurp(run.eval_results()) == before_results &&
                            slurp(run.inference_log()) == before_log &&
                            slurp(run.chain_checkpoint(0)) == before_ckpt && Json::parse(printed) == results;
    const double accuracy = results.value("accuracy", -1.0);
    std::ostringstream d;
    d << observations << "/6 malformed calls returned observations; episode accuracy " << accuracy
      << (saw_validation ? ", validation observation recorded" : ", no validation observation")
      << (reproduced ? "; eval reproduced the metrics without model calls" : "; eval did NOT reproduce");
    return {observations == 6 && close(accuracy, 1.0) && saw_validation && reproduced, d.str()};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"serialization round trip", serialization_round_trip},
        {"prompt fallback order", prompt_fallback},
        {"linear degeneration", linear_degeneration},
        {"MCTS against exhaustive oracle", mcts_oracle},
        {"MCTS visit bookkeeping", mcts_bookkeeping},
        {"BFS beam", bfs_beam},
        {"ensemble and n_terminate", ensemble},
        {"branching gate efficiency", cit_efficiency},
        {"artifact layout", artifact_layout},
        {"resume equivalence", resume_equivalence},
        {"accounting conservation", accounting},
        {"diversity metrics", diversity},
        {"temperature escalation", temperature},
        {"tool-use loop", tool_use},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %02zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
