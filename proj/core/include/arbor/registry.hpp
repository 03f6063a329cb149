#pragma once

/**
 * @file registry.hpp
 * @brief Named registration of components, datasets, tool resources and search engines.
 *
 * Entries are keyed by (kind, name). Run assembly picks a policy, transition
 * and reward for a dataset in this order: explicit overrides, then the
 * search framework bundle, then a transition named after the dataset, then
 * the defaults of the dataset's task type.
 */

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "arbor/components.hpp"
#include "arbor/kinds.hpp"
#include "arbor/search.hpp"
#include "arbor/tools.hpp"

namespace arbor {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetItem {
    std::string question;
    std::string answer;
    /// Goal description for environment tasks.
    std::string goals;
};

struct EvalOutcome {
    bool correct = false;
    /// Partial credit in [0, 1]; equals 1 when correct.
    double partial = 0.0;
};

class Dataset {
  public:
    virtual ~Dataset() = default;
    /// Items in query order. `options` may carry "data_file" and "limit".
    virtual std::vector<DatasetItem> load(const Json& options) const = 0;
    /// Scores a finished query from its final state and extracted answer.
    virtual EvalOutcome evaluate(const DatasetItem& item, const State& final_state,
                                 const std::optional<std::string>& answer) const = 0;
};

class DatasetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Reads JSON-lines records of the form {"question": ..., "answer": ...}.
/// A "goals" string field is kept when present. Blank lines are skipped.
std::vector<DatasetItem> load_jsonl_items(const std::filesystem::path& file);

/// Applies options["limit"] when present.
std::vector<DatasetItem> apply_limit(std::vector<DatasetItem> items, const Json& options);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

struct ComponentKey {
    ComponentKind kind = ComponentKind::policy;
    std::string name;
    /// Absent for components written for a single task instance.
    std::optional<TaskType> task_type;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>(const ComponentDeps&)>;
using TransitionFactory = std::function<std::unique_ptr<Transition>(const ComponentDeps&)>;
using RewardFactory = std::function<std::unique_ptr<RewardModel>(const ComponentDeps&)>;
using DatasetFactory = std::function<std::unique_ptr<Dataset>()>;
using ResourceFactory = std::function<std::shared_ptr<const ResourceBundle>()>;
using SearchFactory = std::function<std::unique_ptr<TreeSearch>()>;

using Factory =
    std::variant<PolicyFactory, TransitionFactory, RewardFactory, DatasetFactory, ResourceFactory, SearchFactory>;

struct FactoryEntry {
    ComponentKey key;
    Factory factory;
    /// Option names the factory understands, for documentation and config checks.
    std::optional<std::vector<std::string>> config_schema;
};

class NotFoundError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class AssemblyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Policy, transition and reward names registered together.
struct FrameworkBundle {
    std::string policy;
    std::string transition;
    std::string reward;
};

struct RunOverrides {
    std::optional<std::string> policy;
    std::optional<std::string> transition;
    std::optional<std::string> reward;
    std::optional<std::string> search_framework;
};

/// Resolved entries for one run.
struct RunAssembly {
    std::string dataset_name;
    TaskType task_type = TaskType::language_grounded;
    const FactoryEntry* dataset = nullptr;
    const FactoryEntry* policy = nullptr;
    const FactoryEntry* transition = nullptr;
    const FactoryEntry* reward = nullptr;
    /// Tool bundle registered under the dataset name, if any.
    const FactoryEntry* resource = nullptr;

    Json describe() const;
};

class ComponentRegistry {
  public:
    /// Throws RegistrationError naming the existing entry on a duplicate (kind, name).
    void add(FactoryEntry entry);

    void register_policy(std::string name, std::optional<TaskType> type, PolicyFactory f);
    void register_transition(std::string name, std::optional<TaskType> type, TransitionFactory f);
    void register_reward(std::string name, std::optional<TaskType> type, RewardFactory f);
    void register_dataset(std::string name, TaskType type, DatasetFactory f);
    void register_resource(std::string name, std::optional<TaskType> type, ResourceFactory f);
    void register_search(std::string name, SearchFactory f);
    void register_framework(std::string name, FrameworkBundle bundle);

    /// Exact, case-sensitive lookup. Throws NotFoundError listing registered names.
    const FactoryEntry& resolve(ComponentKind kind, std::string_view name) const;
    const FactoryEntry* find(ComponentKind kind, std::string_view name) const;
    const FrameworkBundle& framework(std::string_view name) const;

    std::vector<std::string> names(ComponentKind kind) const;
    std::vector<std::string> frameworks() const;

    RunAssembly assemble_run(const std::string& dataset_name, const RunOverrides& overrides = {}) const;

    std::unique_ptr<Dataset> make_dataset(std::string_view name) const;
    std::unique_ptr<TreeSearch> make_search(std::string_view name) const;
    std::shared_ptr<const ResourceBundle> make_resource(std::string_view name) const;

  private:
    std::map<std::pair<int, std::string>, FactoryEntry, std::less<>> entries_;
    std::map<std::string, FrameworkBundle, std::less<>> frameworks_;
};

/// Builds the components of an assembly and binds them to each other. The
/// assembly's resource, when present, is added to `deps` first.
Components instantiate(const RunAssembly& assembly, ComponentDeps deps);

/// Registry used by the command-line tool and extension modules.
ComponentRegistry& global_registry();
PromptRegistry& global_prompts();

}  // namespace arbor
