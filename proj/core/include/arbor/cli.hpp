#pragma once

/**
 * @file cli.hpp
 * @brief The search, chain and eval commands.
 *
 * Flags may also come from a JSON file given with --config; explicit flags
 * win over file values. Exit codes: 0 success, 1 usage error, 2 runtime
 * failure.
 */

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arbor/backends.hpp"
#include "arbor/registry.hpp"
#include "arbor/search.hpp"

namespace arbor {

enum class CliCommand { search, chain, eval };

struct CliOptions {
    CliCommand command = CliCommand::search;
    std::string save_dir;

    std::string dataset;
    std::optional<std::string> data_file;
    std::optional<int> limit;

    std::optional<std::string> search_framework;
    std::string search = "mcts";
    std::optional<std::string> policy;
    std::optional<std::string> transition;
    std::optional<std::string> reward;

    SearchConfig search_config;
    int max_steps = 10;

    std::string backend = "mock";
    std::optional<std::string> model;
    std::optional<std::string> base_url;
    /// "solver" or "adversarial" stand-in for the mock backend.
    std::string mock_flavor = "solver";
    std::optional<std::string> pricing_file;

    bool resume = false;
    int workers = 1;
    std::vector<std::string> imports;
};

/// Parses argv-style arguments (without the program name). Throws
/// CliUsageError on bad flags; `--help` throws CliHelp carrying the text.
CliOptions parse_cli(const std::vector<std::string>& args);

class CliUsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CliHelp : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Injection points for tests and embedding.
struct CliHooks {
    /// Replaces the backend chosen by --backend.
    std::shared_ptr<LlmBackend> backend;
    /// Clock for inference-log timestamps.
    InferenceLogger::Clock log_clock;
    /// Called after each chain step has been checkpointed.
    std::function<void(int query_idx, const State& state)> after_step;
};

/// Loads extension modules. Each must export
/// `extern "C" void arbor_register_extensions(arbor::ComponentRegistry&, arbor::PromptRegistry&)`.
void load_extension(const std::string& path, ComponentRegistry& registry, PromptRegistry& prompts);

/// Runs a parsed command against the global registries. Returns the exit code.
int execute(const CliOptions& options, std::ostream& out, std::ostream& err, const CliHooks& hooks = {});

/// Parse and execute. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliHooks& hooks = {});

}  // namespace arbor
