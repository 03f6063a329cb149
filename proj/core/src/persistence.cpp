#include "arbor/persistence.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "arbor/observability.hpp"

namespace arbor {

fs::path RunDirectory::conventional(const fs::path& base, const std::string& task, const std::string& method,
                                    const std::string& version)
{
    return base / (task + "_" + method) / ("run_" + version);
}

fs::path RunDirectory::iteration_checkpoint(int q, int iteration) const
{
    return checkpoints_dir() / (std::to_string(q) + "_" + std::to_string(iteration) + ".json");
}

fs::path RunDirectory::result_file(int q) const
{
    return checkpoints_dir() / (std::to_string(q) + "_result.json");
}

fs::path RunDirectory::chain_checkpoint(int q) const
{
    return checkpoints_dir() / (std::to_string(q) + ".json");
}

fs::path RunDirectory::terminal_nodes_file(int q) const
{
    return terminal_dir() / ("terminal_nodes_" + std::to_string(q) + ".json");
}

void RunDirectory::prepare() const
{
    std::error_code ec;
    fs::create_directories(checkpoints_dir(), ec);
    if (ec) {
        throw ArtifactError("cannot create " + checkpoints_dir().string() + ": " + ec.message());
    }
}

void write_text_atomic(const fs::path& file, const std::string& text)
{
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ArtifactError("cannot write " + tmp.string());
        }
        out << text;
        if (!out.flush()) {
            throw ArtifactError("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, file, ec);
    if (ec) {
        throw ArtifactError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

std::string read_text(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw ArtifactError("cannot read " + file.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json(const fs::path& file)
{
    try {
        return Json::parse(read_text(file));
    } catch (const Json::parse_error& e) {
        throw ArtifactError(file.string() + " is not valid JSON: " + e.what());
    }
}

ExecutionLog::ExecutionLog(fs::path file) : file_(std::move(file))
{
    std::error_code ec;
    fs::create_directories(file_.parent_path(), ec);
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    if (!out) {
        throw ArtifactError("cannot open " + file_.string());
    }
}

void ExecutionLog::info(const std::string& message)
{
    write("INFO", message);
}

void ExecutionLog::warn(const std::string& message)
{
    write("WARNING", message);
}

void ExecutionLog::write(const char* level, const std::string& message)
{
    std::lock_guard lock(mu_);
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out << level << " " << message << "\n";
}

void write_config(const RunDirectory& run, const Json& config)
{
    write_text_atomic(run.config_file(), dump_json(config) + "\n");
}

Json read_config(const RunDirectory& run)
{
    if (!fs::exists(run.config_file())) {
        throw ArtifactError("no config.json in " + run.root().string());
    }
    return read_json(run.config_file());
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

void write_search_artifacts(const RunDirectory& run, int query_idx, int iteration, const std::string& query,
                            const Tree& tree)
{
    Json doc{{"iteration", iteration}, {"query", query}, {"tree", serialize_tree(tree)}};
    write_text_atomic(run.iteration_checkpoint(query_idx, iteration), dump_json(doc) + "\n");
}

void SearchCheckpointWriter::on_iteration(int query_idx, int iteration, const Tree& tree)
{
    write_search_artifacts(run_, query_idx, iteration, query_, tree);
}

void write_search_result(const RunDirectory& run, int query_idx, const std::string& query, const SearchResult& r)
{
    Json doc{{"query_idx", query_idx},
             {"query", query},
             {"answer", r.answer ? Json(*r.answer) : Json(nullptr)},
             {"success", r.success},
             {"partial", r.partial},
             {"terminated_early", r.terminated_early},
             {"iterations", r.iterations},
             {"policy_calls", r.policy_calls},
             {"error", r.error},
             {"best_path", r.best_path},
             {"terminals", r.terminals},
             {"tree", serialize_tree(r.tree)}};
    write_text_atomic(run.result_file(query_idx), dump_json(doc) + "\n");

    Json nodes = Json::array();
    for (NodeId id : r.terminals) {
        nodes.push_back(serialize_node(r.tree.node(id)));
    }
    Json term{{"query_idx", query_idx}, {"query", query}, {"terminal_nodes", std::move(nodes)}};
    write_text_atomic(run.terminal_nodes_file(query_idx), dump_json(term) + "\n");
}

const State& StoredSearchResult::final_state() const
{
    if (tree.empty()) {
        static const State empty;
        return empty;
    }
    return tree.node(best_path.empty() ? 0 : best_path.back()).state;
}

StoredSearchResult read_search_result(const RunDirectory& run, int query_idx, const TypeRegistry& types)
{
    const Json doc = read_json(run.result_file(query_idx));
    StoredSearchResult r;
    try {
        r.query = doc.at("query").get<std::string>();
        if (doc.contains("answer") && doc["answer"].is_string()) {
            r.answer = doc["answer"].get<std::string>();
        }
        r.success = doc.value("success", false);
        r.partial = doc.value("partial", false);
        r.best_path = doc.at("best_path").get<std::vector<NodeId>>();
        r.tree = deserialize_tree(doc.at("tree"), types);
    } catch (const Json::exception& e) {
        throw ArtifactError(run.result_file(query_idx).string() + ": " + e.what());
    }
    return r;
}

void append_tree_paths(const RunDirectory& run, const Tree& tree, const std::vector<NodeId>& path)
{
    std::ofstream out(run.tree_jsonl(), std::ios::app | std::ios::binary);
    if (!out) {
        throw ArtifactError("cannot write " + run.tree_jsonl().string());
    }
    for (NodeId id : path) {
        const Node& n = tree.node(id);
        Json line{{"node_id", n.id},
                  {"parent_id", n.parent_id ? Json(*n.parent_id) : Json(nullptr)},
                  {"depth", n.depth},
                  {"reward", n.reward},
                  {"render", n.state.render()}};
        out << line.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

void write_chain_artifacts(const RunDirectory& run, int query_idx, const State& trajectory)
{
    Json doc{{"query", trajectory.query()}, {"state", serialize_state(trajectory)}};
    write_text_atomic(run.chain_checkpoint(query_idx), dump_json(doc) + "\n");
}

State read_chain_checkpoint(const RunDirectory& run, int query_idx, const TypeRegistry& types)
{
    const Json doc = read_json(run.chain_checkpoint(query_idx));
    if (!doc.is_object() || !doc.contains("state")) {
        throw SchemaError("state", "missing field");
    }
    State s = deserialize_state(doc["state"], types);
    if (s.query().empty() && doc.contains("query") && doc["query"].is_string()) {
        s = State(s.kind(), doc["query"].get<std::string>(), s.init_render(), s.steps());
    }
    return s;
}

State resume_chain(const RunDirectory& run, int query_idx, const TypeRegistry& types)
{
    const fs::path file = run.chain_checkpoint(query_idx);
    if (!fs::exists(file)) {
        throw ResumeError("no checkpoint to resume at " + file.string());
    }
    try {
        return read_chain_checkpoint(run, query_idx, types);
    } catch (const std::exception& e) {
        throw ResumeError("checkpoint " + file.string() + " is unreadable: " + e.what());
    }
}

namespace {

std::vector<int> indices_matching(const RunDirectory& run, const std::regex& re)
{
    std::vector<int> out;
    std::error_code ec;
    if (!fs::is_directory(run.checkpoints_dir(), ec)) {
        return out;
    }
    for (const auto& entry : fs::directory_iterator(run.checkpoints_dir())) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, re)) {
            out.push_back(std::stoi(m[1].str()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<int> chain_query_indices(const RunDirectory& run)
{
    static const std::regex re(R"((\d+)\.json)");
    return indices_matching(run, re);
}

std::vector<int> search_query_indices(const RunDirectory& run)
{
    static const std::regex re(R"((\d+)_result\.json)");
    return indices_matching(run, re);
}

// ---------------------------------------------------------------------------
// Preference pairs
// ---------------------------------------------------------------------------

std::string situation_key(const State& state, std::size_t index)
{
    if (state.kind() == StateKind::env) {
        std::string render = state.init_render();
        for (std::size_t i = 0; i < index && i < state.size(); ++i) {
            if (const auto* e = step_as<EnvStep>(state.steps()[i]); e && e->next_state) {
                render = *e->next_state;
            }
        }
        return render;
    }
    std::string render = state.init_render();
    for (std::size_t i = 0; i < index && i < state.size(); ++i) {
        if (!state.steps()[i]->has_error()) {
            render += "\n" + state.steps()[i]->render();
        }
    }
    return render;
}

namespace {

std::string action_text(const Step& s)
{
    if (const auto* e = step_as<EnvStep>(s)) {
        return e->action;
    }
    if (const auto* c = step_as<ConcatStep>(s)) {
        return c->action ? c->action->text() : std::string{};
    }
    if (const auto* q = step_as<SubQAStep>(s)) {
        return q->sub_question;
    }
    if (const auto* t = step_as<ToolStep>(s)) {
        return t->action ? t->action->text() : std::string{};
    }
    return s->render();
}

std::string error_text(const Step& s)
{
    if (const auto* e = step_as<EnvStep>(s); e && e->error) {
        return *e->error;
    }
    return s->render();
}

}  // namespace

std::vector<PreferencePair> preference_pairs(const std::vector<State>& attempts, const std::vector<State>& successes)
{
    std::multimap<std::string, std::string> valid;
    for (const State& s : successes) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s.steps()[i]->has_error()) {
                valid.emplace(situation_key(s, i), action_text(s.steps()[i]));
            }
        }
    }
    std::vector<PreferencePair> out;
    for (const State& s : attempts) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const Step& step = s.steps()[i];
            if (!step->has_error()) {
                continue;
            }
            const std::string key = situation_key(s, i);
            auto [lo, hi] = valid.equal_range(key);
            for (auto it = lo; it != hi; ++it) {
                out.push_back(PreferencePair{key, it->second, action_text(step), error_text(step)});
            }
        }
    }
    return out;
}

std::vector<PreferencePair> export_preference_pairs(const RunDirectory& run, const TypeRegistry& types)
{
    std::vector<State> attempts;
    std::vector<State> successes;

    std::map<int, bool> correct;
    if (fs::exists(run.eval_results())) {
        const Json ev = read_json(run.eval_results());
        for (const auto& q : ev.value("queries", Json::array())) {
            correct[q.value("query_idx", -1)] = q.value("correct", false);
        }
    }
    for (int q : chain_query_indices(run)) {
        State s = read_chain_checkpoint(run, q, types);
        if (correct[q]) {
            successes.push_back(s);
        }
        attempts.push_back(std::move(s));
    }
    for (int q : search_query_indices(run)) {
        StoredSearchResult r = read_search_result(run, q, types);
        // A node whose newest step failed contributes that failure.
        for (const Node& n : r.tree.nodes()) {
            if (!n.state.empty() && n.state.steps().back()->has_error()) {
                attempts.push_back(n.state);
            }
        }
        if (r.success) {
            successes.push_back(r.final_state());
        }
    }
    // A search node's state repeats the error steps of its ancestors; keep one
    // copy of each error step by deduplicating on (situation, action, error).
    std::vector<PreferencePair> pairs = preference_pairs(attempts, successes);
    std::vector<PreferencePair> out;
    for (auto& p : pairs) {
        if (std::find(out.begin(), out.end(), p) == out.end()) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

Json totals_json(const UsageTotals& t)
{
    return Json{{"prompt_tokens", t.prompt_tokens},
                {"completion_tokens", t.completion_tokens},
                {"latency_ms", t.latency_ms},
                {"calls", t.calls}};
}

Json groups_json(const std::map<std::string, UsageTotals>& groups)
{
    Json out = Json::object();
    for (const auto& [k, v] : groups) {
        out[k] = totals_json(v);
    }
    return out;
}

std::optional<std::string> opt_string(const Json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        return std::nullopt;
    }
    return it->get<std::string>();
}

}  // namespace

Json evaluate_run(const RunDirectory& run, const ComponentRegistry& registry, const TypeRegistry& types)
{
    const Json config = read_config(run);
    const std::string mode = config.value("mode", "search");
    const std::string dataset_name = config.at("dataset").get<std::string>();
    const Json components = config.value("components", Json::object());

    auto dataset = registry.make_dataset(dataset_name);
    const std::vector<DatasetItem> items = dataset->load(config.value("dataset_options", Json::object()));

    RunOverrides ov;
    ov.policy = opt_string(components, "policy");
    ov.transition = opt_string(components, "transition");
    ov.reward = opt_string(components, "reward");
    const RunAssembly assembly = registry.assemble_run(dataset_name, ov);
    ComponentDeps deps;
    deps.task_name = dataset_name;
    Components comps = instantiate(assembly, deps);

    Json queries = Json::array();
    int n_correct = 0;
    double partial_sum = 0.0;
    const std::vector<int> indices = mode == "chain" ? chain_query_indices(run) : search_query_indices(run);
    for (int q : indices) {
        State state;
        std::optional<std::string> answer;
        bool success = false;
        if (mode == "chain") {
            state = read_chain_checkpoint(run, q, types);
            answer = comps.transition->extract_answer(state);
            const Task task{q, state.query(),
                            q < static_cast<int>(items.size()) ? items[static_cast<std::size_t>(q)].goals : ""};
            success = comps.transition->goal_check(task, state).success;
        } else {
            StoredSearchResult r = read_search_result(run, q, types);
            state = r.final_state();
            answer = r.answer;
            success = r.success;
        }
        EvalOutcome outcome;
        if (q < static_cast<int>(items.size())) {
            outcome = dataset->evaluate(items[static_cast<std::size_t>(q)], state, answer);
        }
        n_correct += outcome.correct ? 1 : 0;
        partial_sum += outcome.partial;
        queries.push_back(Json{{"query_idx", q},
                               {"answer", answer ? Json(*answer) : Json(nullptr)},
                               {"correct", outcome.correct},
                               {"partial", outcome.partial},
                               {"goal_reached", success},
                               {"steps", state.size()}});
    }

    std::vector<InferenceRecord> records;
    if (fs::exists(run.inference_log())) {
        records = InferenceLogger::read_file(run.inference_log());
    }
    long long policy_calls = 0;
    for (const auto& r : records) {
        if (r.component.rfind("policy:", 0) == 0) {
            ++policy_calls;
        }
    }
    Json cost = nullptr;
    if (auto it = config.find("pricing"); it != config.end() && it->is_object() && !it->empty()) {
        try {
            cost = compute_cost(records, CostModel::from_json(*it));
        } catch (const PricingError&) {
            cost = nullptr;
        }
    }

    const int n = static_cast<int>(indices.size());
    return Json{{"mode", mode},
                {"dataset", dataset_name},
                {"n_queries", n},
                {"n_correct", n_correct},
                {"accuracy", n ? static_cast<double>(n_correct) / n : 0.0},
                {"mean_partial", n ? partial_sum / n : 0.0},
                {"queries", std::move(queries)},
                {"usage", totals_json(grand_total(records))},
                {"by_component", groups_json(aggregate(records, GroupBy::component))},
                {"by_phase", groups_json(aggregate(records, GroupBy::phase))},
                {"policy_calls", policy_calls},
                {"cost_usd", cost}};
}

Json write_evaluation(const RunDirectory& run, const ComponentRegistry& registry, bool results_file,
                      const TypeRegistry& types)
{
    Json doc = evaluate_run(run, registry, types);
    if (results_file) {
        write_text_atomic(run.eval_results(), dump_json(doc) + "\n");
    }
    std::ostringstream log;
    log << "dataset " << doc["dataset"].get<std::string>() << ", " << doc["n_queries"].get<int>() << " queries\n";
    for (const auto& q : doc["queries"]) {
        log << "query " << q["query_idx"].get<int>() << ": correct=" << (q["correct"].get<bool>() ? "true" : "false")
            << " partial=" << q["partial"].get<double>()
            << " answer=" << (q["answer"].is_string() ? q["answer"].get<std::string>() : "(none)") << "\n";
    }
    log << "accuracy " << doc["accuracy"].get<double>() << " (" << doc["n_correct"].get<int>() << "/"
        << doc["n_queries"].get<int>() << ")\n";
    const Json& u = doc["usage"];
    log << "tokens prompt=" << u["prompt_tokens"].get<long long>()
        << " completion=" << u["completion_tokens"].get<long long>() << " calls=" << u["calls"].get<long long>()
        << "\n";
    if (doc["cost_usd"].is_number()) {
        log << "cost_usd " << doc["cost_usd"].get<double>() << "\n";
    }
    write_text_atomic(run.eval_log(), log.str());
    return doc;
}

}  // namespace arbor
