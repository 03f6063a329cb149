#pragma once

/**
 * @file components.hpp
 * @brief Policy, Transition and RewardModel contracts plus the generic built-ins.
 *
 * Search engines only talk to these three interfaces. A Policy proposes
 * candidate actions for a state, a Transition executes one action and checks
 * goals, and a RewardModel scores a step in [0, 1]. The built-ins are
 * prompt-driven: each looks its prompts up through the PromptRegistry using
 * its task name and task type, and reports every model call to the
 * InferenceLogger under the current search phase.
 */

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arbor/backends.hpp"
#include "arbor/kinds.hpp"
#include "arbor/prompts.hpp"
#include "arbor/structures.hpp"
#include "arbor/tools.hpp"

namespace arbor {

/// What a search sees of one dataset item. `goals` is only populated for
/// environment tasks whose transition needs them (e.g. a BlocksWorld goal).
struct Task {
    int index = 0;
    std::string question;
    std::string goals;
};

struct GoalStatus {
    bool done = false;
    bool success = false;

    friend bool operator==(const GoalStatus&, const GoalStatus&) = default;
};

/// Raised when a policy cannot produce a single usable action.
class EmptyPolicyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using WarningSink = std::function<void(const std::string&)>;

/// Everything a component factory may need. Shared pointers are owned by the
/// query worker that assembled the components.
struct ComponentDeps {
    std::shared_ptr<LlmBackend> backend;
    std::shared_ptr<InferenceLogger> logger;
    std::shared_ptr<PhaseTracker> tracker = std::make_shared<PhaseTracker>();
    std::shared_ptr<const PromptRegistry> prompts;
    /// Values loaded from the prompt config file, merged into every render.
    PromptBindings bindings;
    std::string task_name;
    /// Free-form component options (retry budget, sampling limits...).
    Json options = Json::object();
    std::shared_ptr<const ResourceBundle> resource;
    WarningSink warn;
};

/// Lowercase, trimmed, inner whitespace collapsed. Used to detect duplicate actions.
std::string normalize_action_text(std::string_view text);

/// Extracts a score in [0, 1] from judge output. Understands "a/b" ratios
/// and bare numbers; whole numbers in (1, 10] are read on a ten-point scale.
std::optional<double> parse_score(std::string_view text);

/// Shared plumbing for prompt-driven components.
class LlmComponent {
  public:
    virtual ~LlmComponent() = default;

    const std::string& name() const noexcept { return name_; }
    ComponentKind kind() const noexcept { return kind_; }
    /// Absent for components written for a single task instance.
    std::optional<TaskType> task_type() const noexcept { return task_type_; }
    const std::string& task_name() const noexcept { return task_name_; }

  protected:
    LlmComponent(ComponentKind kind, std::string name, std::optional<TaskType> task_type, const ComponentDeps& deps);

    /// Prompt used ahead of any registry level for `role`. Options may also
    /// supply one under `options["prompts"]["usr_prompt"|"task_prompt"]`.
    void set_explicit_prompt(PromptRole role, std::string text);

    /// Looks up and renders the prompt for `role`; config bindings are
    /// applied first so `extra` wins on conflicts.
    std::string render(PromptRole role, const PromptBindings& extra) const;
    bool has_prompt(PromptRole role) const;
    GenerationRequest request(const PromptBindings& bindings) const;
    void warn(const std::string& message) const;

    const Json& options() const noexcept { return options_; }
    int option_int(const char* key, int fallback) const;
    double option_double(const char* key, double fallback) const;

    LlmClient llm_;

  private:
    ComponentKind kind_;
    std::string name_;
    std::optional<TaskType> task_type_;
    std::string task_name_;
    std::shared_ptr<const PromptRegistry> prompts_;
    PromptBindings bindings_;
    Json options_;
    WarningSink warn_;
    std::map<PromptRole, PromptSpec> explicit_;
};

class Transition;

class Policy : public LlmComponent {
  public:
    /// Returns between 1 and n distinct actions; never mutates `state`.
    virtual std::vector<Action> get_actions(const State& state, int n, const Task& task) = 0;
    /// Called once after assembly with the transition the policy feeds.
    virtual void bind_transition(const Transition& transition) { transition_ = &transition; }

  protected:
    using LlmComponent::LlmComponent;
    const Transition* transition_ = nullptr;
};

class Transition : public LlmComponent {
  public:
    virtual State init_state(const Task& task) const = 0;
    /// Executes `action`. Invalid actions come back as error-annotated steps,
    /// never as exceptions.
    virtual Step step(const State& state, const Action& action, const Task& task) = 0;
    /// Pure. `done` is true whenever `success` is.
    virtual GoalStatus goal_check(const Task& task, const State& state) const = 0;

    /// Complete legal action set for finite-action domains; nullopt otherwise.
    virtual std::optional<std::vector<Action>> generate_actions(const State&, const Task&) const { return std::nullopt; }
    /// Why `action` would be rejected, or nullopt when it is acceptable.
    virtual std::optional<std::string> validate(const State&, const Action&, const Task&) const { return std::nullopt; }
    virtual std::optional<std::string> extract_answer(const State&) const { return std::nullopt; }
    /// True when goal_check reflects ground truth (environment tasks).
    virtual bool goal_grounded() const { return false; }

  protected:
    using LlmComponent::LlmComponent;
};

class RewardModel : public LlmComponent {
  public:
    /// Score in [0, 1] for taking `step` from `state`.
    virtual double score(const State& state, const Step& step, const Task& task) = 0;
    virtual void bind(Policy&, Transition&) {}

  protected:
    using LlmComponent::LlmComponent;
};

struct Components {
    std::unique_ptr<Policy> policy;
    std::unique_ptr<Transition> transition;
    std::unique_ptr<RewardModel> reward;
    std::shared_ptr<PhaseTracker> tracker;
};

// ---------------------------------------------------------------------------
// Generic built-ins
// ---------------------------------------------------------------------------

/// Samples the model once per wanted action, dropping duplicates and raising
/// the temperature each time one shows up. Finite-action domains are topped
/// up with unselected legal actions.
class SamplingPolicy : public Policy {
  public:
    std::vector<Action> get_actions(const State& state, int n, const Task& task) override;

  protected:
    SamplingPolicy(std::string name, std::optional<TaskType> task_type, const ComponentDeps& deps);

    virtual PromptBindings bindings(const State& state, const Task& task) const = 0;
    /// nullopt when the output cannot be turned into an action.
    virtual std::optional<Action> parse(const std::string& output, const State& state, const Task& task) const = 0;
    /// Sampling loop without the empty-result check.
    std::vector<Action> sample(const State& state, int n, const Task& task);

    TemperatureSchedule schedule_;
    /// Whether an action the transition rejects is still returned once the
    /// retry budget is spent (it then becomes an error-annotated step).
    bool keep_invalid_ = true;
    int max_samples_per_action_ = 2;
    int retry_budget_ = 1;
};

/// Next reasoning step as free text (chain-of-thought style).
class ConcatPolicy final : public SamplingPolicy {
  public:
    explicit ConcatPolicy(const ComponentDeps& deps, std::string name = "concat",
                          std::optional<TaskType> task_type = TaskType::language_grounded);

  protected:
    PromptBindings bindings(const State& state, const Task& task) const override;
    std::optional<Action> parse(const std::string& output, const State& state, const Task& task) const override;
};

/// Appends reasoning steps; an "answer is" step finishes the trajectory.
class ConcatTransition final : public Transition {
  public:
    explicit ConcatTransition(const ComponentDeps& deps);

    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::string> extract_answer(const State& state) const override;
};

/// Finds "the answer is X" (case-insensitive) and returns X without a trailing period.
std::optional<std::string> extract_answer_phrase(std::string_view text);

/// Prompted step scorer.
class GenerativePRM final : public RewardModel {
  public:
    explicit GenerativePRM(const ComponentDeps& deps, std::string name = "generative",
                           std::optional<TaskType> task_type = TaskType::language_grounded);
    double score(const State& state, const Step& step, const Task& task) override;

  private:
    double default_score_;
};

/// Sub-question decomposition: the policy proposes sub-questions, the
/// transition answers them with the model.
class SubQuestionPolicy final : public SamplingPolicy {
  public:
    explicit SubQuestionPolicy(const ComponentDeps& deps);

  protected:
    PromptBindings bindings(const State& state, const Task& task) const override;
    std::optional<Action> parse(const std::string& output, const State& state, const Task& task) const override;
};

class SubQATransition final : public Transition {
  public:
    explicit SubQATransition(const ComponentDeps& deps);

    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::string> extract_answer(const State& state) const override;
};

/// Prefix marking the final sub-question of a decomposition.
inline constexpr std::string_view kFinalSubQuestionPrefix = "Now we can answer the question";

// ---------------------------------------------------------------------------
// Environment-grounded
// ---------------------------------------------------------------------------

/// Base for text environments whose state is fully described by a render.
/// Subclasses supply parsing-free hooks over the current render; this class
/// handles replay, retries, error annotation and goal checks.
class EnvTransition : public Transition {
  public:
    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::vector<Action>> generate_actions(const State& state, const Task& task) const override;
    std::optional<std::string> validate(const State& state, const Action& action, const Task& task) const override;
    bool goal_grounded() const override { return true; }

    /// Render of the environment after the last executed step.
    static std::string current_render(const State& state);
    int retry_budget() const noexcept { return retry_budget_; }

  protected:
    EnvTransition(std::string name, const ComponentDeps& deps);

    virtual std::string initial_render(const Task& task) const = 0;
    virtual std::optional<std::string> check_command(const std::string& render, const std::string& command,
                                                     const Task& task) const = 0;
    virtual std::string apply_command(const std::string& render, const std::string& command,
                                      const Task& task) const = 0;
    virtual GoalStatus check_goal(const std::string& render, const Task& task) const = 0;
    virtual std::optional<std::vector<std::string>> legal_commands(const std::string&, const Task&) const
    {
        return std::nullopt;
    }

  private:
    int retry_budget_ = 1;
};

/// Error text recorded on a rejected environment action.
std::string validation_failure_message(int retries);

/// Shared policy for environment tasks. Invalid proposals are retried; in
/// finite domains they are dropped and the list is filled with unselected
/// legal actions in generation order.
class EnvGroundedPolicy final : public SamplingPolicy {
  public:
    explicit EnvGroundedPolicy(const ComponentDeps& deps);
    std::vector<Action> get_actions(const State& state, int n, const Task& task) override;

  protected:
    PromptBindings bindings(const State& state, const Task& task) const override;
    std::optional<Action> parse(const std::string& output, const State& state, const Task& task) const override;
};

/// Prompted scorer for environment steps; rejected actions score 0 without a call.
class EnvGroundedPRM final : public RewardModel {
  public:
    explicit EnvGroundedPRM(const ComponentDeps& deps);
    double score(const State& state, const Step& step, const Task& task) override;

  private:
    double default_score_;
};

// ---------------------------------------------------------------------------
// Tool use
// ---------------------------------------------------------------------------

/// Parsed model turn in Thought / Action / Action Input or Final Answer form.
struct ReActTurn {
    std::string thought;
    std::shared_ptr<const ToolAction> action;
};

std::optional<ReActTurn> parse_react_output(std::string_view text);

class ToolUsePolicy final : public SamplingPolicy {
  public:
    explicit ToolUsePolicy(const ComponentDeps& deps);

  protected:
    PromptBindings bindings(const State& state, const Task& task) const override;
    std::optional<Action> parse(const std::string& output, const State& state, const Task& task) const override;

  private:
    std::shared_ptr<const ResourceBundle> resource_;
};

class ToolUseTransition final : public Transition {
  public:
    explicit ToolUseTransition(const ComponentDeps& deps);

    State init_state(const Task& task) const override;
    Step step(const State& state, const Action& action, const Task& task) override;
    GoalStatus goal_check(const Task& task, const State& state) const override;
    std::optional<std::string> extract_answer(const State& state) const override;

  private:
    std::shared_ptr<const ResourceBundle> resource_;
};

/// Registers the default-level and task-type-level prompts used by the built-ins.
void register_builtin_prompts(PromptRegistry& prompts);

}  // namespace arbor
