#include "arbor/registry.hpp"

#include <fstream>

namespace arbor {

std::vector<DatasetItem> load_jsonl_items(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw DatasetError("cannot read dataset file " + file.string());
    }
    std::vector<DatasetItem> items;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DatasetError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto text = [&](const char* key, bool required) -> std::string {
            auto it = rec.find(key);
            if (it == rec.end()) {
                if (required) {
                    throw DatasetError(file.string() + ":" + std::to_string(lineno) + ": missing \"" + key + "\"");
                }
                return {};
            }
            return it->is_string() ? it->get<std::string>() : it->dump();
        };
        items.push_back(DatasetItem{text("question", true), text("answer", true), text("goals", false)});
    }
    return items;
}

std::vector<DatasetItem> apply_limit(std::vector<DatasetItem> items, const Json& options)
{
    if (auto it = options.find("limit"); it != options.end() && it->is_number_integer()) {
        const auto n = it->get<long long>();
        if (n >= 0 && static_cast<std::size_t>(n) < items.size()) {
            items.resize(static_cast<std::size_t>(n));
        }
    }
    return items;
}

Json RunAssembly::describe() const
{
    auto name_of = [](const FactoryEntry* e) { return e ? Json(e->key.name) : Json(nullptr); };
    return Json{{"dataset", dataset_name},
                {"task_type", std::string(to_string(task_type))},
                {"policy", name_of(policy)},
                {"transition", name_of(transition)},
                {"reward", name_of(reward)},
                {"resource", name_of(resource)}};
}

void ComponentRegistry::add(FactoryEntry entry)
{
    auto key = std::pair(static_cast<int>(entry.key.kind), entry.key.name);
    if (auto it = entries_.find(key); it != entries_.end()) {
        const auto& k = it->second.key;
        throw RegistrationError("duplicate registration: " + std::string(to_string(k.kind)) + " \"" + k.name +
                                "\" already registered" +
                                (k.task_type ? " for task type " + std::string(to_string(*k.task_type)) : ""));
    }
    entries_.emplace(std::move(key), std::move(entry));
}

void ComponentRegistry::register_policy(std::string name, std::optional<TaskType> type, PolicyFactory f)
{
    add({{ComponentKind::policy, std::move(name), type}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_transition(std::string name, std::optional<TaskType> type, TransitionFactory f)
{
    add({{ComponentKind::transition, std::move(name), type}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_reward(std::string name, std::optional<TaskType> type, RewardFactory f)
{
    add({{ComponentKind::reward, std::move(name), type}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_dataset(std::string name, TaskType type, DatasetFactory f)
{
    add({{ComponentKind::dataset, std::move(name), type}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_resource(std::string name, std::optional<TaskType> type, ResourceFactory f)
{
    add({{ComponentKind::resource, std::move(name), type}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_search(std::string name, SearchFactory f)
{
    add({{ComponentKind::search, std::move(name), std::nullopt}, std::move(f), std::nullopt});
}

void ComponentRegistry::register_framework(std::string name, FrameworkBundle bundle)
{
    if (frameworks_.count(name)) {
        throw RegistrationError("duplicate registration: search framework \"" + name + "\" already registered");
    }
    frameworks_.emplace(std::move(name), std::move(bundle));
}

const FactoryEntry* ComponentRegistry::find(ComponentKind kind, std::string_view name) const
{
    auto it = entries_.find(std::pair(static_cast<int>(kind), std::string(name)));
    return it == entries_.end() ? nullptr : &it->second;
}

namespace {

std::string join(const std::vector<std::string>& names)
{
    std::string out;
    for (const auto& n : names) {
        out += out.empty() ? n : ", " + n;
    }
    return out.empty() ? "(none)" : out;
}

}  // namespace

const FactoryEntry& ComponentRegistry::resolve(ComponentKind kind, std::string_view name) const
{
    if (const auto* e = find(kind, name)) {
        return *e;
    }
    throw NotFoundError("no " + std::string(to_string(kind)) + " named \"" + std::string(name) +
                        "\"; registered: " + join(names(kind)));
}

const FrameworkBundle& ComponentRegistry::framework(std::string_view name) const
{
    auto it = frameworks_.find(name);
    if (it == frameworks_.end()) {
        throw NotFoundError("no search framework named \"" + std::string(name) + "\"; registered: " +
                            join(frameworks()));
    }
    return it->second;
}

std::vector<std::string> ComponentRegistry::names(ComponentKind kind) const
{
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) {
        if (k.first == static_cast<int>(kind)) {
            out.push_back(k.second);
        }
    }
    return out;
}

std::vector<std::string> ComponentRegistry::frameworks() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : frameworks_) {
        out.push_back(k);
    }
    return out;
}

RunAssembly ComponentRegistry::assemble_run(const std::string& dataset_name, const RunOverrides& overrides) const
{
    RunAssembly a;
    a.dataset_name = dataset_name;
    a.dataset = &resolve(ComponentKind::dataset, dataset_name);
    a.task_type = *a.dataset->key.task_type;

    std::optional<FrameworkBundle> bundle;
    if (overrides.search_framework) {
        bundle = framework(*overrides.search_framework);
    }

    std::string policy, transition, reward;
    switch (a.task_type) {
    case TaskType::language_grounded:
        policy = "concat";
        transition = "concat";
        reward = "generative";
        break;
    case TaskType::env_grounded:
        policy = "env_grounded";
        transition = dataset_name;
        reward = "env_grounded";
        break;
    case TaskType::tool_use:
        policy = "tool_use";
        transition = "tool_use";
        reward = "lats";
        break;
    }
    if (find(ComponentKind::transition, dataset_name)) {
        transition = dataset_name;
    }
    if (bundle) {
        policy = bundle->policy;
        transition = bundle->transition;
        reward = bundle->reward;
    }
    policy = overrides.policy.value_or(policy);
    transition = overrides.transition.value_or(transition);
    reward = overrides.reward.value_or(reward);

    a.policy = &resolve(ComponentKind::policy, policy);
    a.transition = &resolve(ComponentKind::transition, transition);
    a.reward = &resolve(ComponentKind::reward, reward);
    a.resource = find(ComponentKind::resource, dataset_name);

    for (const FactoryEntry* e : {a.policy, a.transition, a.reward, a.resource}) {
        if (e && e->key.task_type && *e->key.task_type != a.task_type) {
            throw AssemblyError(std::string(to_string(e->key.kind)) + " \"" + e->key.name + "\" is " +
                                std::string(to_string(*e->key.task_type)) + " but dataset \"" + dataset_name +
                                "\" is " + std::string(to_string(a.task_type)));
        }
    }
    if (a.task_type == TaskType::tool_use && !a.resource) {
        throw AssemblyError("tool-use dataset \"" + dataset_name + "\" has no resource registered under its name");
    }
    return a;
}

std::unique_ptr<Dataset> ComponentRegistry::make_dataset(std::string_view name) const
{
    return std::get<DatasetFactory>(resolve(ComponentKind::dataset, name).factory)();
}

std::unique_ptr<TreeSearch> ComponentRegistry::make_search(std::string_view name) const
{
    return std::get<SearchFactory>(resolve(ComponentKind::search, name).factory)();
}

std::shared_ptr<const ResourceBundle> ComponentRegistry::make_resource(std::string_view name) const
{
    return std::get<ResourceFactory>(resolve(ComponentKind::resource, name).factory)();
}

Components instantiate(const RunAssembly& a, ComponentDeps deps)
{
    if (!a.policy || !a.transition || !a.reward) {
        throw AssemblyError("assembly is missing a policy, transition or reward");
    }
    if (a.resource && !deps.resource) {
        deps.resource = std::get<ResourceFactory>(a.resource->factory)();
    }
    if (deps.task_name.empty()) {
        deps.task_name = a.dataset_name;
    }
    if (!deps.tracker) {
        deps.tracker = std::make_shared<PhaseTracker>();
    }
    Components c;
    c.tracker = deps.tracker;
    c.policy = std::get<PolicyFactory>(a.policy->factory)(deps);
    c.transition = std::get<TransitionFactory>(a.transition->factory)(deps);
    c.reward = std::get<RewardFactory>(a.reward->factory)(deps);
    if (!c.policy || !c.transition || !c.reward) {
        throw AssemblyError("a component factory returned null");
    }
    c.policy->bind_transition(*c.transition);
    c.reward->bind(*c.policy, *c.transition);
    return c;
}

ComponentRegistry& global_registry()
{
    static ComponentRegistry registry;
    return registry;
}

PromptRegistry& global_prompts()
{
    static PromptRegistry prompts;
    return prompts;
}

}  // namespace arbor
