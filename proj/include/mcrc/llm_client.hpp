#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace mcrc {

struct ChatMessage {
    std::string role = "user";
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 8;
    bool want_first_token_distribution = false;
    /// Zero-based sample number for repeated requests of the same prompt
    /// (generation retries). Not part of the fingerprint; scripted sequences
    /// and the HTTP seed parameter key on it.
    int attempt = 0;

    static ChatRequest user(std::string content, double temperature, int max_tokens);
};

/// Token -> probability for the first generated token.
using TokenDistribution = std::map<std::string, double>;

struct Completion {
    std::string text;
    std::optional<TokenDistribution> first_token_distribution;
    std::string backend_id;
    std::string request_fingerprint;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_backoff_ms = 250;
    int max_backoff_ms = 8000;

    /// Delay before retry number `retry` (1-based). Nondecreasing in `retry`.
    std::chrono::milliseconds backoff(int retry) const;
};

enum class BackendKind { http, scripted };

struct BackendConfig {
    BackendKind kind = BackendKind::scripted;
    std::string endpoint;       // http: base URL, e.g. "https://api.openai.com/v1"
    std::string model_name;
    std::string auth_env;       // http: name of the environment variable holding the token
    std::filesystem::path script;  // scripted: script file
    RetryPolicy retry;
    int timeout_ms = 60000;
    int top_k = 5;
    int max_in_flight = 4;

    void validate() const;
};

BackendConfig backend_config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir = {});

/// Stable hash of (model name, temperature, messages).
std::string request_fingerprint(const std::string& model_name, const ChatRequest& request);

class Backend {
public:
    virtual ~Backend() = default;
    virtual Completion complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
    virtual const std::string& model_name() const = 0;
};

struct ScriptResponse {
    std::string text;
    std::optional<TokenDistribution> distribution;
};

struct ScriptRule {
    std::optional<std::string> fingerprint;
    std::optional<std::string> pattern;  // ECMAScript regex searched in the user message
    std::optional<std::string> contains; // plain substring of the user message
    /// One entry per attempt; the last entry repeats for later attempts.
    std::vector<ScriptResponse> sequence;
};

/// Deterministic backend answering from a rule list. The answer is a pure
/// function of the request (fingerprint, content, attempt) and the script.
class ScriptedBackend final : public Backend {
public:
    ScriptedBackend(std::string model_name, std::vector<ScriptRule> rules,
                    std::optional<ScriptResponse> fallback = std::nullopt);

    static ScriptedBackend from_json(const nlohmann::json& script, std::string model_name = {});
    static ScriptedBackend from_file(const std::filesystem::path& path, std::string model_name = {});

    Completion complete(const ChatRequest& request) override;
    std::string id() const override { return "scripted:" + model_name_; }
    const std::string& model_name() const override { return model_name_; }

private:
    struct CompiledRule {
        ScriptRule rule;
        std::optional<std::regex> regex;
    };
    std::string model_name_;
    std::vector<CompiledRule> rules_;
    std::optional<ScriptResponse> fallback_;
};

/// OpenAI-compatible chat-completions client.
class HttpBackend final : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpBackend(BackendConfig config, Sleeper sleeper = {});
    ~HttpBackend() override;

    Completion complete(const ChatRequest& request) override;
    std::string id() const override { return "http:" + config_.model_name; }
    const std::string& model_name() const override { return config_.model_name; }

    /// Total HTTP attempts made, including retries.
    int attempts_made() const;

private:
    struct Limiter;
    BackendConfig config_;
    Sleeper sleeper_;
    std::unique_ptr<Limiter> limiter_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

/// Builds the request body sent by HttpBackend.
nlohmann::json chat_request_body(const std::string& model_name, const ChatRequest& request,
                                 int top_k);
/// Extracts a Completion from a chat-completions response body.
Completion parse_chat_response(const nlohmann::json& body);

/// Scales a distribution so its masses sum to one. Non-positive entries are dropped.
TokenDistribution normalized(const TokenDistribution& dist);

}  // namespace mcrc
