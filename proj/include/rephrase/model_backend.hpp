#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rephrase/errors.hpp"

namespace rephrase {

enum class ChatRole { System, User, Assistant };

std::string_view chat_role_name(ChatRole role);

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
};

struct CompletionRequest {
    std::vector<ChatMessage> messages; // first message has role system
    double temperature = 0.2;
    int max_output_tokens = 1024;
    std::string tag; // "role:pair_id", used for logging and script lookup
};

struct CompletionResponse {
    std::string content;
    long input_tokens = 0;
    long output_tokens = 0;
    long latency_ms = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    long base_backoff_ms = 1000;
    double backoff_factor = 2.0;
};

// Delay before retry number completed_attempts + 1:
// base_backoff_ms * backoff_factor^(completed_attempts - 1).
long backoff_delay_ms(const RetryPolicy& policy, int completed_attempts);

// Enforces the request invariants: at least one message, the first with role
// system, and non-empty content on system/user messages.
void validate_request(const CompletionRequest& request);

class BackendFailureError : public std::runtime_error {
public:
    BackendFailureError(int attempts, const std::string& last_cause);
    int attempts() const { return attempts_; }
    const std::string& last_cause() const { return last_cause_; }

private:
    int attempts_;
    std::string last_cause_;
};

class AuthFailureError : public std::runtime_error {
public:
    explicit AuthFailureError(const std::string& what) : std::runtime_error(what) {}
};

class MalformedResponseError : public std::runtime_error {
public:
    explicit MalformedResponseError(const std::string& what) : std::runtime_error(what) {}
};

class ScriptExhaustedError : public std::runtime_error {
public:
    ScriptExhaustedError(const std::string& tag, std::size_t ordinal);
    const std::string& tag() const { return tag_; }
    std::size_t ordinal() const { return ordinal_; }

private:
    std::string tag_;
    std::size_t ordinal_;
};

// Uniform chat-completion contract. Instances must tolerate concurrent
// complete() calls from multiple workers.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
};

// Deterministic backend for tests and offline runs. Responses are keyed by
// (tag, call ordinal): the n-th complete() call carrying a given tag consumes
// entry n of that tag's list, each entry at most once. A missing entry throws
// ScriptExhaustedError naming the key.
class ScriptedBackend : public ChatBackend {
public:
    using Script = std::map<std::string, std::vector<std::string>>;

    explicit ScriptedBackend(Script script);

    // JSON file: {"<tag>": ["response 1", "response 2", ...], ...}
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string name() const override { return "scripted"; }

private:
    Script script_;
    std::map<std::string, std::size_t> consumed_;
    std::mutex mu_; // ordinal accounting stays exact under concurrency
};

// ---------------------------------------------------------------------------
// Live HTTP backend
// ---------------------------------------------------------------------------

struct HttpResult {
    int status = 0;
    std::string body;
    std::string transport_error; // non-empty means the request never completed
};

// POSTs json_body to {base_url}{path} with the bearer token attached.
using HttpPostFn = std::function<HttpResult(const std::string& path, const std::string& json_body)>;
using SleepFn = std::function<void(long ms)>;

struct HttpBackendConfig {
    std::string base_url; // e.g. https://api.example.com
    std::string api_key;
    std::string model; // config field, never hard-coded
    RetryPolicy retry;
    long timeout_ms = 60000;
};

// Reads REPHRASE_API_BASE and REPHRASE_API_KEY from the environment.
HttpBackendConfig http_config_from_env(const std::string& model, RetryPolicy retry = {});

// Speaks the de facto chat-completions wire protocol:
// POST {base_url}/v1/chat/completions. Transient failures (timeouts,
// rate limits, 5xx) are retried with exponential backoff per RetryPolicy;
// auth rejections are never retried.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config);
    // Injectable transport and sleep for deterministic tests.
    HttpChatBackend(HttpBackendConfig config, HttpPostFn post, SleepFn sleep);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string name() const override { return "live"; }

    static std::string render_request_body(const CompletionRequest& request,
                                           const std::string& model);

private:
    HttpBackendConfig config_;
    HttpPostFn post_;
    SleepFn sleep_;
};

// Word-count token estimate used by the scripted backend so offline run
// records stay deterministic.
long approx_token_count(std::string_view text);

} // namespace rephrase
