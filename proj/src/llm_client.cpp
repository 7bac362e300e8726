#include "mcrc/llm_client.hpp"

#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"
#include "mcrc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mcrc {

using nlohmann::json;

ChatRequest ChatRequest::user(std::string content, double temperature, int max_tokens) {
    ChatRequest r;
    r.messages.push_back({"user", std::move(content)});
    r.temperature = temperature;
    r.max_tokens = max_tokens;
    return r;
}

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
    if (retry < 1) return std::chrono::milliseconds(0);
    const int shift = std::min(retry - 1, 20);
    const long long ms = static_cast<long long>(base_backoff_ms) << shift;
    return std::chrono::milliseconds(std::min<long long>(ms, std::max(max_backoff_ms, base_backoff_ms)));
}

void BackendConfig::validate() const {
    if (retry.max_attempts < 1) throw Error(ErrorCode::config, "retry.max_attempts must be >= 1");
    if (retry.base_backoff_ms < 0) throw Error(ErrorCode::config, "retry.base_backoff_ms must be >= 0");
    if (timeout_ms <= 0) throw Error(ErrorCode::config, "timeout_ms must be positive");
    if (max_in_flight < 1) throw Error(ErrorCode::config, "max_in_flight must be >= 1");
    if (kind == BackendKind::http) {
        if (endpoint.empty()) throw Error(ErrorCode::config, "http backend needs an endpoint");
        if (model_name.empty()) throw Error(ErrorCode::config, "http backend needs a model name");
    } else if (script.empty()) {
        throw Error(ErrorCode::config, "scripted backend needs a script file");
    }
}

BackendConfig backend_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    BackendConfig c;
    const auto kind = j.value("kind", std::string("scripted"));
    if (kind == "http") {
        c.kind = BackendKind::http;
    } else if (kind == "scripted") {
        c.kind = BackendKind::scripted;
    } else {
        throw Error(ErrorCode::config, "unknown backend kind '" + kind + "'");
    }
    c.endpoint = j.value("endpoint", std::string{});
    c.model_name = j.value("model", std::string{});
    c.auth_env = j.value("auth_env", std::string{});
    if (j.contains("script")) {
        std::filesystem::path p = j.at("script").get<std::string>();
        c.script = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
        c.retry.base_backoff_ms = r.value("base_backoff_ms", c.retry.base_backoff_ms);
        c.retry.max_backoff_ms = r.value("max_backoff_ms", c.retry.max_backoff_ms);
    }
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.top_k = j.value("top_k", c.top_k);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.validate();
    return c;
}

std::string request_fingerprint(const std::string& model_name, const ChatRequest& request) {
    // Fixed precision keeps the key independent of float printing.
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.6f", request.temperature);
    std::string canonical = model_name;
    canonical += '\x1f';
    canonical += temp;
    for (const auto& m : request.messages) {
        canonical += '\x1e';
        canonical += m.role;
        canonical += '\x1f';
        canonical += m.content;
    }
    return to_hex(fnv1a64(canonical));
}

TokenDistribution normalized(const TokenDistribution& dist) {
    double total = 0;
    for (const auto& [tok, p] : dist)
        if (p > 0) total += p;
    TokenDistribution out;
    if (total <= 0) return out;
    for (const auto& [tok, p] : dist)
        if (p > 0) out[tok] = p / total;
    return out;
}

// ---------------------------------------------------------------------------
// Scripted backend

namespace {

ScriptResponse response_from_json(const json& j) {
    ScriptResponse r;
    if (j.is_string()) {
        r.text = j.get<std::string>();
        return r;
    }
    r.text = j.value("text", std::string{});
    if (j.contains("distribution")) {
        TokenDistribution d;
        for (const auto& [tok, p] : j.at("distribution").items()) d[tok] = p.get<double>();
        r.distribution = std::move(d);
    }
    return r;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::string model_name, std::vector<ScriptRule> rules,
                                 std::optional<ScriptResponse> fallback)
    : model_name_(std::move(model_name)), fallback_(std::move(fallback)) {
    for (auto& rule : rules) {
        if (rule.sequence.empty()) throw Error(ErrorCode::config, "script rule without responses");
        CompiledRule compiled{std::move(rule), std::nullopt};
        if (compiled.rule.pattern) {
            try {
                compiled.regex.emplace(*compiled.rule.pattern, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw Error(ErrorCode::config,
                            "bad script pattern '" + *compiled.rule.pattern + "': " + e.what());
            }
        }
        rules_.push_back(std::move(compiled));
    }
}

ScriptedBackend ScriptedBackend::from_json(const json& script, std::string model_name) {
    if (model_name.empty()) model_name = script.value("model", std::string("scripted"));
    std::vector<ScriptRule> rules;
    for (const auto& jr : script.value("rules", json::array())) {
        ScriptRule rule;
        if (jr.contains("fingerprint")) rule.fingerprint = jr.at("fingerprint").get<std::string>();
        if (jr.contains("pattern")) rule.pattern = jr.at("pattern").get<std::string>();
        if (jr.contains("contains")) rule.contains = jr.at("contains").get<std::string>();
        if (!rule.fingerprint && !rule.pattern && !rule.contains)
            throw Error(ErrorCode::config, "script rule needs a fingerprint, pattern or contains");
        if (jr.contains("sequence")) {
            for (const auto& r : jr.at("sequence")) rule.sequence.push_back(response_from_json(r));
        } else if (jr.contains("response")) {
            rule.sequence.push_back(response_from_json(jr.at("response")));
        }
        rules.push_back(std::move(rule));
    }
    std::optional<ScriptResponse> fallback;
    if (script.contains("default") && !script.at("default").is_null())
        fallback = response_from_json(script.at("default"));
    return ScriptedBackend(std::move(model_name), std::move(rules), std::move(fallback));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path,
                                           std::string model_name) {
    json script;
    try {
        script = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::config, "script " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(script, std::move(model_name));
}

Completion ScriptedBackend::complete(const ChatRequest& request) {
    const auto fp = request_fingerprint(model_name_, request);
    std::string content;
    for (const auto& m : request.messages) content += m.content;

    const ScriptResponse* chosen = nullptr;
    for (const auto& r : rules_) {
        bool match = false;
        if (r.rule.fingerprint) match = *r.rule.fingerprint == fp;
        if (!match && r.rule.contains) match = content.find(*r.rule.contains) != std::string::npos;
        if (!match && r.regex) match = std::regex_search(content, *r.regex);
        if (!match) continue;
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(request.attempt, 0)),
                                               r.rule.sequence.size() - 1);
        chosen = &r.rule.sequence[idx];
        break;
    }
    if (!chosen && fallback_) chosen = &*fallback_;
    if (!chosen)
        throw Error(ErrorCode::config, "no script entry for request " + fp + " on " + id());

    Completion c;
    c.text = chosen->text;
    c.backend_id = id();
    c.request_fingerprint = fp;
    if (request.want_first_token_distribution && chosen->distribution)
        c.first_token_distribution = normalized(*chosen->distribution);
    return c;
}

// ---------------------------------------------------------------------------
// Wire format

json chat_request_body(const std::string& model_name, const ChatRequest& request, int top_k) {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", model_name},
                 {"messages", std::move(messages)},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens}};
    if (request.want_first_token_distribution) {
        body["logprobs"] = true;
        body["top_logprobs"] = top_k;
    }
    if (request.attempt > 0) body["seed"] = request.attempt;
    return body;
}

Completion parse_chat_response(const json& body) {
    Completion c;
    try {
        const auto& choice = body.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        c.text = content.is_null() ? std::string{} : content.get<std::string>();
        auto lp = choice.find("logprobs");
        if (lp != choice.end() && lp->is_object() && lp->contains("content") &&
            lp->at("content").is_array() && !lp->at("content").empty()) {
            const auto& first = lp->at("content").at(0);
            TokenDistribution dist;
            if (first.contains("top_logprobs")) {
                for (const auto& alt : first.at("top_logprobs"))
                    dist[alt.at("token").get<std::string>()] += std::exp(alt.at("logprob").get<double>());
            } else {
                dist[first.at("token").get<std::string>()] += std::exp(first.at("logprob").get<double>());
            }
            c.first_token_distribution = normalized(dist);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("unexpected chat-completions response: ") + e.what());
    }
    return c;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    if (config.kind == BackendKind::http) return std::make_unique<HttpBackend>(config);
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(config.script, config.model_name));
}

}  // namespace mcrc
