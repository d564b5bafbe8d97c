#include "rephrase/model_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace rephrase {

namespace {

using nlohmann::json;

bool is_transient_status(int status) {
    return status == 408 || status == 429 || (status >= 500 && status < 600);
}

bool is_auth_status(int status) { return status == 401 || status == 403; }

long now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace

std::string_view chat_role_name(ChatRole role) {
    switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

long backoff_delay_ms(const RetryPolicy& policy, int completed_attempts) {
    double delay = static_cast<double>(policy.base_backoff_ms) *
                   std::pow(policy.backoff_factor, completed_attempts - 1);
    return static_cast<long>(delay);
}

void validate_request(const CompletionRequest& request) {
    if (request.messages.empty())
        throw UserError("completion request has no messages");
    if (request.messages.front().role != ChatRole::System)
        throw UserError("completion request must start with a system message");
    for (const auto& msg : request.messages) {
        if (msg.role != ChatRole::Assistant && msg.content.empty())
            throw UserError("completion request has an empty " +
                            std::string(chat_role_name(msg.role)) + " message");
    }
    if (request.temperature < 0.0) throw UserError("temperature must be >= 0");
    if (request.max_output_tokens <= 0) throw UserError("max_output_tokens must be > 0");
}

BackendFailureError::BackendFailureError(int attempts, const std::string& last_cause)
    : std::runtime_error("backend failure after " + std::to_string(attempts) +
                         " attempt(s): " + last_cause),
      attempts_(attempts),
      last_cause_(last_cause) {}

ScriptExhaustedError::ScriptExhaustedError(const std::string& tag, std::size_t ordinal)
    : std::runtime_error("scripted backend: no response for key (" + tag + ", " +
                         std::to_string(ordinal) + ")"),
      tag_(tag),
      ordinal_(ordinal) {}

long approx_token_count(std::string_view text) {
    long count = 0;
    bool in_word = false;
    for (char ch : text) {
        const bool space = std::isspace(static_cast<unsigned char>(ch));
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

// ---------------------------------------------------------------------------
// ScriptedBackend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(Script script) : script_(std::move(script)) {
    if (script_.empty()) throw UserError("scripted backend: script is empty");
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open script file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UserError("invalid script file " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw UserError("script file must be a JSON object of tag -> responses");
    Script script;
    for (const auto& [tag, responses] : doc.items()) {
        if (!responses.is_array())
            throw UserError("script entry '" + tag + "' must be an array of strings");
        auto& list = script[tag];
        for (const auto& r : responses) list.push_back(r.get<std::string>());
    }
    return std::make_unique<ScriptedBackend>(std::move(script));
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& request) {
    validate_request(request);
    std::lock_guard<std::mutex> lock(mu_);
    const std::size_t ordinal = consumed_[request.tag] + 1;
    auto it = script_.find(request.tag);
    if (it == script_.end() || it->second.size() < ordinal)
        throw ScriptExhaustedError(request.tag, ordinal);
    consumed_[request.tag] = ordinal;

    CompletionResponse resp;
    resp.content = it->second[ordinal - 1];
    for (const auto& msg : request.messages) resp.input_tokens += approx_token_count(msg.content);
    resp.output_tokens = approx_token_count(resp.content);
    resp.latency_ms = 0;
    return resp;
}

// ---------------------------------------------------------------------------
// HttpChatBackend
// ---------------------------------------------------------------------------

HttpBackendConfig http_config_from_env(const std::string& model, RetryPolicy retry) {
    HttpBackendConfig cfg;
    const char* base = std::getenv("REPHRASE_API_BASE");
    const char* key = std::getenv("REPHRASE_API_KEY");
    cfg.base_url = base ? base : "";
    cfg.api_key = key ? key : "";
    cfg.model = model;
    cfg.retry = retry;
    if (cfg.base_url.empty())
        throw UserError("live backend requires REPHRASE_API_BASE to be set");
    return cfg;
}

std::string HttpChatBackend::render_request_body(const CompletionRequest& request,
                                                 const std::string& model) {
    json messages = json::array();
    for (const auto& msg : request.messages)
        messages.push_back({{"role", chat_role_name(msg.role)}, {"content", msg.content}});
    json body = {
        {"model", model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
    return body.dump();
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config)
    : config_(std::move(config)) {
    post_ = [this](const std::string& path, const std::string& body) -> HttpResult {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    };
    sleep_ = [](long ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config, HttpPostFn post, SleepFn sleep)
    : config_(std::move(config)), post_(std::move(post)), sleep_(std::move(sleep)) {}

CompletionResponse HttpChatBackend::complete(const CompletionRequest& request) {
    validate_request(request);
    const std::string body = render_request_body(request, config_.model);
    const long started = now_ms();

    std::string last_cause;
    for (int attempt = 1;; ++attempt) {
        HttpResult res = post_("/v1/chat/completions", body);

        if (res.transport_error.empty() && is_auth_status(res.status))
            throw AuthFailureError("authentication rejected (HTTP " +
                                   std::to_string(res.status) + ")");

        if (res.transport_error.empty() && res.status == 200) {
            json doc;
            try {
                doc = json::parse(res.body);
            } catch (const json::exception& e) {
                throw MalformedResponseError(std::string("response is not JSON: ") + e.what());
            }
            if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
                !doc["choices"][0].contains("message"))
                throw MalformedResponseError("response lacks choices[0].message");
            CompletionResponse out;
            out.content = doc["choices"][0]["message"].value("content", "");
            if (doc.contains("usage")) {
                out.input_tokens = doc["usage"].value("prompt_tokens", 0);
                out.output_tokens = doc["usage"].value("completion_tokens", 0);
            }
            out.latency_ms = now_ms() - started;
            return out;
        }

        const bool transient = !res.transport_error.empty() || is_transient_status(res.status);
        last_cause = !res.transport_error.empty()
                         ? "transport error: " + res.transport_error
                         : "HTTP " + std::to_string(res.status);
        if (!transient || attempt >= config_.retry.max_attempts)
            throw BackendFailureError(attempt, last_cause);
        sleep_(backoff_delay_ms(config_.retry, attempt));
    }
}

} // namespace rephrase
