#include "arbor/backends.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace arbor {

long long count_tokens_fallback(std::string_view text)
{
    long long n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_word) {
            ++n;
        }
        in_word = !space;
    }
    return n;
}

std::string prompt_hash(std::string_view user_text)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : user_text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::string model_id) : model_id_(std::move(model_id)) {}

void ScriptedBackend::add(std::string prompt, std::vector<std::string> responses)
{
    if (responses.empty()) {
        throw std::invalid_argument("scripted prompt needs at least one response");
    }
    std::lock_guard lock(mu_);
    script_[std::move(prompt)] = std::move(responses);
}

GenerationResponse ScriptedBackend::generate(const GenerationRequest& request)
{
    std::string text;
    {
        std::lock_guard lock(mu_);
        const std::size_t hit = hits_[request.user_text]++;
        auto it = script_.find(request.user_text);
        if (it != script_.end()) {
            text = it->second[hit % it->second.size()];
        } else {
            std::optional<std::string> answer;
            if (responder_) {
                answer = responder_(request, hit);
            }
            if (!answer) {
                hits_[request.user_text]--;
                throw ScriptMissError(prompt_hash(request.user_text));
            }
            text = std::move(*answer);
        }
    }
    GenerationResponse r;
    r.text = std::move(text);
    r.prompt_tokens = count_tokens_fallback(request.system_text.value_or("")) + count_tokens_fallback(request.user_text);
    r.completion_tokens = count_tokens_fallback(r.text);
    r.latency_ms = latency_ms_;
    r.model_id = model_id_;
    {
        std::lock_guard lock(mu_);
        emitted_.prompt_tokens += r.prompt_tokens;
        emitted_.completion_tokens += r.completion_tokens;
        emitted_.latency_ms += r.latency_ms;
        ++emitted_.calls;
    }
    return r;
}

UsageTotals ScriptedBackend::emitted_usage() const
{
    std::lock_guard lock(mu_);
    return emitted_;
}

std::size_t ScriptedBackend::hits(const std::string& prompt) const
{
    std::lock_guard lock(mu_);
    auto it = hits_.find(prompt);
    return it == hits_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

Json HttpBackend::request_body(const GenerationRequest& request, const std::string& model)
{
    Json messages = Json::array();
    if (request.system_text) {
        messages.push_back({{"role", "system"}, {"content", *request.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    Json body{{"model", model},
              {"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
    if (request.stop) {
        body["stop"] = *request.stop;
    }
    return body;
}

GenerationResponse HttpBackend::parse_response(const Json& body, const GenerationRequest& request,
                                               const std::string& model)
{
    GenerationResponse r;
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) {
        throw BackendError("chat completion response has no choices");
    }
    const auto& content = choices[0].at("message").at("content");
    r.text = content.is_string() ? content.get<std::string>() : std::string{};
    r.model_id = body.value("model", model);
    auto usage = body.find("usage");
    if (usage != body.end() && usage->is_object() && usage->contains("prompt_tokens") &&
        usage->contains("completion_tokens")) {
        r.prompt_tokens = usage->at("prompt_tokens").get<long long>();
        r.completion_tokens = usage->at("completion_tokens").get<long long>();
    } else {
        r.prompt_tokens =
            count_tokens_fallback(request.system_text.value_or("")) + count_tokens_fallback(request.user_text);
        r.completion_tokens = count_tokens_fallback(r.text);
        r.approximate_usage = true;
    }
    return r;
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request)
{
    httplib::Client client(config_.base_url);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const Json body = request_body(request, config_.model);
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
        }
        const auto start = std::chrono::steady_clock::now();
        auto res = client.Post(config_.path, headers, payload, "application/json");
        const double elapsed =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            // Client errors other than rate limiting will not succeed on retry.
            if (res->status >= 400 && res->status < 500 && res->status != 429) {
                break;
            }
            continue;
        }
        Json parsed;
        try {
            parsed = Json::parse(res->body);
        } catch (const Json::parse_error& e) {
            throw BackendError("malformed chat completion body: " + res->body.substr(0, 200));
        }
        GenerationResponse out = parse_response(parsed, request, config_.model);
        out.latency_ms = elapsed;
        if (config_.transcript) {
            std::lock_guard lock(transcript_mu_);
            std::ofstream t(*config_.transcript, std::ios::app | std::ios::binary);
            t << Json{{"request", body}, {"response", parsed}}.dump() << '\n';
        }
        return out;
    }
    throw BackendError(last_error);
}

// ---------------------------------------------------------------------------
// Temperature and client wrapper
// ---------------------------------------------------------------------------

TemperatureSchedule escalate_on_duplicate(TemperatureSchedule schedule, bool duplicate_detected)
{
    if (duplicate_detected) {
        schedule.current = std::min(schedule.current + schedule.step, schedule.cap);
    }
    return schedule;
}

LlmClient::LlmClient(std::shared_ptr<LlmBackend> backend, std::shared_ptr<InferenceLogger> logger,
                     std::shared_ptr<PhaseTracker> tracker, std::string component_id)
    : backend_(std::move(backend)), logger_(std::move(logger)), tracker_(std::move(tracker)),
      component_(std::move(component_id))
{
}

GenerationResponse LlmClient::generate(const GenerationRequest& request) const
{
    if (!backend_) {
        throw BackendError("component " + component_ + " has no backend configured");
    }
    GenerationResponse r = backend_->generate(request);
    if (logger_) {
        InferenceRecord rec;
        rec.component = component_;
        rec.phase = tracker_ ? tracker_->current() : PhaseContext{};
        rec.query_idx = rec.phase.query_idx;
        rec.prompt_tokens = r.prompt_tokens;
        rec.completion_tokens = r.completion_tokens;
        rec.latency_ms = r.latency_ms;
        rec.model_id = r.model_id;
        rec.approximate_usage = r.approximate_usage;
        logger_->log(std::move(rec));
    }
    return r;
}

}  // namespace arbor
