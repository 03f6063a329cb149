#include "arbor/cli.hpp"

#include <dlfcn.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "arbor/builtins.hpp"
#include "arbor/domains.hpp"
#include "arbor/persistence.hpp"

namespace arbor {

namespace {

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

bool has_flag(const std::vector<std::string>& args, const std::string& flag)
{
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Expands `--config file.json` into flags that the command line does not set.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args)
{
    std::vector<std::string> explicit_args;
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) {
                throw CliUsageError("--config needs a file");
            }
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            explicit_args.push_back(args[i]);
        }
    }
    if (!config_path) {
        return explicit_args;
    }
    std::ifstream in(*config_path);
    if (!in) {
        throw CliUsageError("cannot read config file " + *config_path);
    }
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw CliUsageError("config file " + *config_path + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) {
        throw CliUsageError("config file " + *config_path + " must hold a JSON object");
    }
    std::vector<std::string> merged = explicit_args;
    for (const auto& [key, value] : doc.items()) {
        const std::string flag = "--" + key;
        if (has_flag(explicit_args, flag)) {
            continue;
        }
        auto scalar = [&](const Json& v) {
            if (v.is_string()) {
                return v.get<std::string>();
            }
            if (v.is_boolean()) {
                return std::string(v.get<bool>() ? "true" : "false");
            }
            if (v.is_number()) {
                return v.dump();
            }
            throw CliUsageError("config key \"" + key + "\" must be a string, number, boolean or list");
        };
        if (value.is_null()) {
            continue;
        }
        if (value.is_array()) {
            for (const auto& v : value) {
                merged.push_back(flag);
                merged.push_back(scalar(v));
            }
        } else if (value.is_boolean()) {
            merged.push_back(flag + "=" + scalar(value));
        } else {
            merged.push_back(flag);
            merged.push_back(scalar(value));
        }
    }
    return merged;
}

template <class T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help)
{
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

CliOptions parse_cli(const std::vector<std::string>& raw_args)
{
    const std::vector<std::string> args = merge_config_file(raw_args);

    CliOptions o;
    CLI::App app{"Tree search and chain agents over language-model components", "arbor"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    auto* search = app.add_subcommand("search", "Run a tree search over every dataset item");
    auto* chain = app.add_subcommand("chain", "Run a chain agent over every dataset item");
    auto* eval = app.add_subcommand("eval", "Recompute metrics from the artifacts of a run");

    for (auto* cmd : {search, chain, eval}) {
        cmd->add_option("--save_dir", o.save_dir, "Run directory")->required();
        cmd->add_option("--import", o.imports, "Extension module to load (repeatable)");
    }
    for (auto* cmd : {search, chain}) {
        cmd->add_option("--dataset", o.dataset, "Registered dataset name")->required();
        optional_option(cmd, "--data_file", o.data_file, "JSON-lines dataset file");
        optional_option(cmd, "--limit", o.limit, "Use only the first N items");
        optional_option(cmd, "--search_framework", o.search_framework, "Component bundle, e.g. rap or tot");
        optional_option(cmd, "--policy", o.policy, "Policy name");
        optional_option(cmd, "--transition", o.transition, "Transition name");
        optional_option(cmd, "--reward", o.reward, "Reward model name");
        cmd->add_option("--backend", o.backend, "mock or http")->check(CLI::IsMember({"mock", "http"}));
        optional_option(cmd, "--model", o.model, "Model id for the http backend");
        optional_option(cmd, "--base_url", o.base_url, "Server URL for the http backend");
        cmd->add_option("--mock_flavor", o.mock_flavor, "solver or adversarial")
            ->check(CLI::IsMember({"solver", "adversarial"}));
        optional_option(cmd, "--pricing", o.pricing_file, "JSON price table for cost reporting");
        cmd->add_option("--workers", o.workers, "Queries processed in parallel")->check(CLI::PositiveNumber);
        cmd->add_flag("--resume", o.resume, "Continue from existing checkpoints");
    }

    SearchConfig& c = o.search_config;
    search->add_option("--search", o.search, "Search engine name");
    search->add_option("--n_actions", c.n_actions, "Children proposed per expansion");
    search->add_option("--n_iterations", c.n_iterations, "MCTS iterations");
    search->add_option("--max_depth", c.max_depth, "Maximum tree depth");
    search->add_option("--rollout_depth", c.rollout_depth, "Maximum simulation depth");
    optional_option(search, "--beam_width", c.beam_width, "BFS beam (defaults to n_actions)");
    optional_option(search, "--bn_threshold", c.bn_threshold, "Branching gate threshold; 0 forces a chain");
    optional_option(search, "--n_terminate", c.n_terminate, "Stop after this many terminals and vote");
    search->add_flag("--early_terminate", c.early_terminate, "Stop at the first goal");
    optional_option(search, "--runtime_limit_s", c.runtime_limit_s, "Wall-clock limit per query");
    search->add_option("--uct_c", c.uct_c, "UCT exploration constant");

    chain->add_option("--max_steps", o.max_steps, "Step budget per query")->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        for (auto* cmd : {search, chain, eval}) {
            if (cmd->parsed()) {
                throw CliHelp(cmd->help());
            }
        }
        throw CliHelp(app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw CliHelp(app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::ParseError& e) {
        throw CliUsageError(e.what());
    }
    if (search->parsed()) {
        o.command = CliCommand::search;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw CliUsageError(e.what());
        }
    } else if (chain->parsed()) {
        o.command = CliCommand::chain;
    } else {
        o.command = CliCommand::eval;
    }
    return o;
}

// ---------------------------------------------------------------------------
// Extensions
// ---------------------------------------------------------------------------

void load_extension(const std::string& path, ComponentRegistry& registry, PromptRegistry& prompts)
{
    static std::mutex mu;
    static std::set<std::pair<const void*, std::string>> loaded;
    std::lock_guard lock(mu);
    const auto key = std::pair<const void*, std::string>(&registry, fs::weakly_canonical(path).string());
    if (loaded.count(key)) {
        return;
    }
    void* handle = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle) {
        throw std::runtime_error("cannot load extension " + path + ": " + dlerror());
    }
    using Entry = void (*)(ComponentRegistry&, PromptRegistry&);
    auto entry = reinterpret_cast<Entry>(dlsym(handle, "arbor_register_extensions"));
    if (!entry) {
        throw std::runtime_error("extension " + path + " does not export arbor_register_extensions");
    }
    entry(registry, prompts);
    loaded.insert(key);
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

namespace {

class UsageFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Removes artifacts of an earlier run so a fresh run starts clean.
void clear_artifacts(const RunDirectory& run)
{
    for (const fs::path& p : {run.execution_log(), run.eval_log(), run.inference_log(), run.tree_jsonl(),
                              run.eval_results(), run.config_file()}) {
        fs::remove(p);
    }
    fs::remove_all(run.checkpoints_dir());
    fs::remove_all(run.terminal_dir());
}

std::shared_ptr<LlmBackend> make_backend(const CliOptions& o, const std::vector<DatasetItem>& items,
                                         ExecutionLog& log)
{
    if (o.backend == "http") {
        HttpBackendConfig cfg;
        if (const char* url = std::getenv("ARBOR_BASE_URL")) {
            cfg.base_url = url;
        }
        if (const char* env = std::getenv("ARBOR_API_KEY_ENV")) {
            cfg.api_key_env = env;
        }
        if (o.base_url) {
            cfg.base_url = *o.base_url;
        }
        if (o.model) {
            cfg.model = *o.model;
        }
        return std::make_shared<HttpBackend>(cfg);
    }
    auto backend = std::make_shared<ScriptedBackend>(o.model.value_or("mock"));
    try {
        backend->set_responder(
            mock_responder(o.dataset, items, o.mock_flavor == "adversarial" ? Flavor::adversarial : Flavor::solver));
    } catch (const NotFoundError&) {
        log.warn("mock backend has no scripted responses for dataset " + o.dataset);
    }
    return backend;
}

Json dataset_options(const CliOptions& o)
{
    Json j = Json::object();
    if (o.data_file) {
        j["data_file"] = *o.data_file;
    }
    if (o.limit) {
        j["limit"] = *o.limit;
    }
    return j;
}

Json pricing_json(const CliOptions& o)
{
    if (!o.pricing_file) {
        return nullptr;
    }
    Json j = read_json(*o.pricing_file);
    CostModel::from_json(j);
    return j;
}

/// Runs `work(q)` for every index on a bounded pool. Failures are logged and
/// counted; they do not stop other queries.
int run_pool(int n, int workers, ExecutionLog& log, const std::function<void(int)>& work)
{
    std::atomic<int> next{0};
    std::atomic<int> failures{0};
    auto worker = [&] {
        for (int q = next++; q < n; q = next++) {
            try {
                work(q);
            } catch (const std::exception& e) {
                ++failures;
                log.warn("query " + std::to_string(q) + " failed: " + e.what());
            }
        }
    };
    const int count = std::max(1, std::min(workers, n));
    std::vector<std::thread> threads;
    for (int i = 1; i < count; ++i) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    return failures.load();
}

struct RunSetup {
    RunDirectory run;
    RunAssembly assembly;
    std::unique_ptr<Dataset> dataset;
    std::vector<DatasetItem> items;
    std::shared_ptr<const ResourceBundle> resource;
    std::shared_ptr<LlmBackend> backend;
    std::shared_ptr<InferenceLogger> logger;
    std::shared_ptr<const PromptRegistry> prompts;
};

RunSetup prepare_run(const CliOptions& o, const CliHooks& hooks, ExecutionLog*& log_out,
                     std::unique_ptr<ExecutionLog>& log_holder)
{
    ComponentRegistry& registry = global_registry();
    RunOverrides ov{o.policy, o.transition, o.reward, o.search_framework};
    RunAssembly assembly;
    std::unique_ptr<Dataset> dataset;
    try {
        assembly = registry.assemble_run(o.dataset, ov);
        dataset = registry.make_dataset(o.dataset);
        if (o.command == CliCommand::search) {
            registry.resolve(ComponentKind::search, o.search);
        }
    } catch (const NotFoundError& e) {
        throw UsageFailure(e.what());
    } catch (const AssemblyError& e) {
        throw UsageFailure(e.what());
    }

    RunDirectory run(o.save_dir);
    if (!o.resume) {
        clear_artifacts(run);
    }
    run.prepare();
    log_holder = std::make_unique<ExecutionLog>(run.execution_log());
    log_out = log_holder.get();

    RunSetup s{run, assembly, std::move(dataset), {}, nullptr, nullptr, nullptr, nullptr};
    s.items = s.dataset->load(dataset_options(o));
    if (assembly.resource) {
        s.resource = std::get<ResourceFactory>(assembly.resource->factory)();
    }
    s.backend = hooks.backend ? hooks.backend : make_backend(o, s.items, *log_out);
    s.logger = std::make_shared<InferenceLogger>(run.inference_log());
    if (hooks.log_clock) {
        s.logger->set_clock(hooks.log_clock);
    }
    s.prompts = std::shared_ptr<const PromptRegistry>(&global_prompts(), [](const PromptRegistry*) {});

    Json config{{"mode", o.command == CliCommand::search ? "search" : "chain"},
                {"dataset", o.dataset},
                {"dataset_options", dataset_options(o)},
                {"components", assembly.describe()},
                {"search_framework", o.search_framework ? Json(*o.search_framework) : Json(nullptr)},
                {"backend", {{"kind", o.backend}, {"model", s.backend->model_id()}}},
                {"pricing", pricing_json(o)}};
    if (o.command == CliCommand::search) {
        config["search"] = o.search;
        config["search_config"] = o.search_config.to_json();
    } else {
        config["max_steps"] = o.max_steps;
    }
    if (o.resume && fs::exists(run.config_file())) {
        const Json previous = read_config(run);
        if (previous != config) {
            log_out->warn("resuming with a configuration that differs from config.json; keeping the original");
        }
    } else {
        write_config(run, config);
    }
    return s;
}

ComponentDeps deps_for(const RunSetup& s, const std::string& dataset, ExecutionLog& log, int q)
{
    ComponentDeps d;
    d.backend = s.backend;
    d.logger = s.logger;
    d.tracker = std::make_shared<PhaseTracker>();
    d.tracker->set(PhaseContext{Phase::none, 0, 0, q});
    d.prompts = s.prompts;
    d.task_name = dataset;
    d.resource = s.resource;
    d.warn = [&log, q](const std::string& m) { log.warn("query " + std::to_string(q) + ": " + m); };
    return d;
}

int run_search_command(const CliOptions& o, const CliHooks& hooks, std::ostream& out)
{
    ExecutionLog* log = nullptr;
    std::unique_ptr<ExecutionLog> holder;
    RunSetup s = prepare_run(o, hooks, log, holder);
    const int n = static_cast<int>(s.items.size());
    log->info("search " + o.search + " on " + o.dataset + ": " + std::to_string(n) + " queries");

    const int failures = run_pool(n, o.workers, *log, [&](int q) {
        if (o.resume && fs::exists(s.run.result_file(q))) {
            log->info("query " + std::to_string(q) + " already finished");
            return;
        }
        const DatasetItem& item = s.items[static_cast<std::size_t>(q)];
        Components comps = instantiate(s.assembly, deps_for(s, o.dataset, *log, q));
        SearchContext ctx = SearchContext::from(comps, Task{q, item.question, item.goals}, o.search_config);
        SearchCheckpointWriter writer(s.run, item.question);
        ctx.sink = &writer;
        ctx.warn = [log, q](const std::string& m) { log->warn("query " + std::to_string(q) + ": " + m); };
        auto engine = global_registry().make_search(o.search);
        SearchResult r = run_search(*engine, std::move(ctx));
        write_search_result(s.run, q, item.question, r);
        if (!r.error.empty()) {
            log->warn("query " + std::to_string(q) + ": " + r.error);
        }
        log->info("query " + std::to_string(q) + " done: success=" + (r.success ? "true" : "false") +
                  " iterations=" + std::to_string(r.iterations) + " policy_calls=" + std::to_string(r.policy_calls));
    });

    fs::remove(s.run.tree_jsonl());
    for (int q : search_query_indices(s.run)) {
        const StoredSearchResult r = read_search_result(s.run, q);
        append_tree_paths(s.run, r.tree, r.best_path);
    }
    if (!fs::exists(s.run.tree_jsonl())) {
        write_text_atomic(s.run.tree_jsonl(), "");
    }
    const Json doc = write_evaluation(s.run, global_registry(), false);
    out << "accuracy " << doc["accuracy"].get<double>() << " (" << doc["n_correct"].get<int>() << "/"
        << doc["n_queries"].get<int>() << ")\n";
    return failures ? 2 : 0;
}

int run_chain_command(const CliOptions& o, const CliHooks& hooks, std::ostream& out)
{
    ExecutionLog* log = nullptr;
    std::unique_ptr<ExecutionLog> holder;
    RunSetup s = prepare_run(o, hooks, log, holder);
    const int n = static_cast<int>(s.items.size());
    log->info("chain on " + o.dataset + ": " + std::to_string(n) + " queries");

    const int failures = run_pool(n, o.workers, *log, [&](int q) {
        const DatasetItem& item = s.items[static_cast<std::size_t>(q)];
        const Task task{q, item.question, item.goals};
        Components comps = instantiate(s.assembly, deps_for(s, o.dataset, *log, q));
        State start;
        if (o.resume && fs::exists(s.run.chain_checkpoint(q))) {
            start = resume_chain(s.run, q);
            if (start.size() >= static_cast<std::size_t>(o.max_steps) ||
                comps.transition->goal_check(task, start).done) {
                log->info("query " + std::to_string(q) + " already finished");
                return;
            }
            log->info("query " + std::to_string(q) + " resumed at step " + std::to_string(start.size()));
        } else {
            start = comps.transition->init_state(task);
            write_chain_artifacts(s.run, q, start);
        }
        auto on_step = [&](const State& st) {
            write_chain_artifacts(s.run, q, st);
            if (hooks.after_step) {
                hooks.after_step(q, st);
            }
        };
        ChainResult r;
        switch (s.assembly.task_type) {
        case TaskType::tool_use:
            r = react_chain(comps, *s.resource, task, o.max_steps, start, on_step);
            break;
        case TaskType::env_grounded:
            r = env_chain(comps, task, o.max_steps, start, on_step);
            break;
        case TaskType::language_grounded:
            r = run_chain(*comps.policy, *comps.transition, *comps.tracker, task, o.max_steps, start, on_step);
            break;
        }
        log->info("query " + std::to_string(q) + " done: steps=" + std::to_string(r.state.size()) +
                  " success=" + (r.success ? "true" : "false"));
    });

    const Json doc = write_evaluation(s.run, global_registry(), true);
    out << "accuracy " << doc["accuracy"].get<double>() << " (" << doc["n_correct"].get<int>() << "/"
        << doc["n_queries"].get<int>() << ")\n";
    return failures ? 2 : 0;
}

int run_eval_command(const CliOptions& o, std::ostream& out)
{
    const RunDirectory run(o.save_dir);
    if (!fs::exists(run.config_file())) {
        throw UsageFailure("no config.json in " + o.save_dir);
    }
    const Json doc = write_evaluation(run, global_registry(), true);
    out << dump_json(doc) << "\n";
    return 0;
}

}  // namespace

int execute(const CliOptions& o, std::ostream& out, std::ostream& err, const CliHooks& hooks)
{
    try {
        ensure_builtins();
        for (const auto& path : o.imports) {
            load_extension(path, global_registry(), global_prompts());
        }
        switch (o.command) {
        case CliCommand::search:
            return run_search_command(o, hooks, out);
        case CliCommand::chain:
            return run_chain_command(o, hooks, out);
        case CliCommand::eval:
            return run_eval_command(o, out);
        }
    } catch (const UsageFailure& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliHooks& hooks)
{
    CliOptions o;
    try {
        o = parse_cli(args);
    } catch (const CliHelp& h) {
        out << h.what();
        return 0;
    } catch (const CliUsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return execute(o, out, err, hooks);
}

}  // namespace arbor
