#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arbor/observability.hpp"

namespace arbor {

struct GenerationRequest {
    std::optional<std::string> system_text;
    std::string user_text;
    double temperature = 0.8;
    int max_tokens = 512;
    std::optional<std::vector<std::string>> stop;
};

struct GenerationResponse {
    std::string text;
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    double latency_ms = 0.0;
    std::string model_id;
    bool approximate_usage = false;
};

class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised by the scripted backend for a prompt it has no answer for.
class ScriptMissError : public BackendError {
  public:
    explicit ScriptMissError(std::string hash)
        : BackendError("scripted backend has no response for prompt " + hash), hash_(std::move(hash))
    {
    }
    const std::string& prompt_hash() const noexcept { return hash_; }

  private:
    std::string hash_;
};

/// Text-generation backend. Implementations must be reentrant.
class LlmBackend {
  public:
    virtual ~LlmBackend() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
    virtual std::string model_id() const = 0;
};

/// Whitespace-split word count; used when a backend omits usage.
long long count_tokens_fallback(std::string_view text);

/// Stable FNV-1a digest of the user prompt, rendered as 16 hex digits.
std::string prompt_hash(std::string_view user_text);

/// Deterministic backend keyed on the user prompt. The k-th request for a
/// prompt returns the k-th scripted response, cycling when exhausted. Prompts
/// without a script entry go to the responder, if any.
class ScriptedBackend final : public LlmBackend {
  public:
    using Responder = std::function<std::optional<std::string>(const GenerationRequest&, std::size_t hit)>;

    explicit ScriptedBackend(std::string model_id = "scripted");

    void add(std::string prompt, std::vector<std::string> responses);
    void set_responder(Responder responder) { responder_ = std::move(responder); }
    void set_latency_ms(double ms) { latency_ms_ = ms; }

    GenerationResponse generate(const GenerationRequest& request) override;
    std::string model_id() const override { return model_id_; }

    /// Usage handed out so far, summed over every response.
    UsageTotals emitted_usage() const;
    std::size_t hits(const std::string& prompt) const;

  private:
    std::string model_id_;
    std::map<std::string, std::vector<std::string>> script_;
    std::map<std::string, std::size_t> hits_;
    Responder responder_;
    double latency_ms_ = 0.0;
    UsageTotals emitted_;
    mutable std::mutex mu_;
};

struct HttpBackendConfig {
    /// Scheme, host and optional port, e.g. "http://localhost:8000".
    std::string base_url = "http://localhost:8000";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
    double timeout_s = 60.0;
    int max_retries = 2;
    int backoff_ms = 500;
    std::optional<std::filesystem::path> transcript;
};

/// OpenAI-compatible chat-completions client.
class HttpBackend final : public LlmBackend {
  public:
    explicit HttpBackend(HttpBackendConfig config);

    GenerationResponse generate(const GenerationRequest& request) override;
    std::string model_id() const override { return config_.model; }

    static Json request_body(const GenerationRequest& request, const std::string& model);
    /// Extracts text and usage; falls back to whitespace counts when usage is absent.
    static GenerationResponse parse_response(const Json& body, const GenerationRequest& request,
                                             const std::string& model);

  private:
    HttpBackendConfig config_;
    std::mutex transcript_mu_;
};

struct TemperatureSchedule {
    double base = 0.8;
    double step = 0.2;
    double cap = 1.2;
    double current = 0.8;

    void reset() noexcept { current = base; }
};

/// On a duplicate, raises the temperature by one step, never past the cap.
TemperatureSchedule escalate_on_duplicate(TemperatureSchedule schedule, bool duplicate_detected);

/// Component-side handle: forwards to the backend and logs one inference
/// record per call under the current phase.
class LlmClient {
  public:
    LlmClient() = default;
    LlmClient(std::shared_ptr<LlmBackend> backend, std::shared_ptr<InferenceLogger> logger,
              std::shared_ptr<PhaseTracker> tracker, std::string component_id);

    GenerationResponse generate(const GenerationRequest& request) const;

    bool valid() const noexcept { return backend_ != nullptr; }
    const std::string& component_id() const noexcept { return component_; }
    const std::shared_ptr<PhaseTracker>& tracker() const noexcept { return tracker_; }

  private:
    std::shared_ptr<LlmBackend> backend_;
    std::shared_ptr<InferenceLogger> logger_;
    std::shared_ptr<PhaseTracker> tracker_;
    std::string component_;
};

}  // namespace arbor
