#include "mcrc/error.hpp"
#include "mcrc/llm_client.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace mcrc {

using nlohmann::json;

struct HttpBackend::Limiter {
    explicit Limiter(int capacity) : free(capacity) {}

    void acquire() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return free > 0; });
        --free;
    }
    void release() {
        {
            std::lock_guard lock(mu);
            ++free;
        }
        cv.notify_one();
    }

    std::mutex mu;
    std::condition_variable cv;
    int free;
    std::atomic<int> attempts{0};
};

namespace {

struct Endpoint {
    std::string origin;     // scheme://host[:port]
    std::string base_path;  // without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::config, "endpoint must be an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    e.base_path = path_start == std::string::npos ? std::string{} : url.substr(path_start);
    while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
    return e;
}

bool is_retryable_status(int status) {
    return status >= 500 || status == 408 || status == 429;
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config, Sleeper sleeper)
    : config_(std::move(config)),
      sleeper_(std::move(sleeper)),
      limiter_(std::make_unique<Limiter>(config_.max_in_flight)) {
    config_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

HttpBackend::~HttpBackend() = default;

int HttpBackend::attempts_made() const { return limiter_->attempts.load(); }

Completion HttpBackend::complete(const ChatRequest& request) {
    const auto endpoint = split_endpoint(config_.endpoint);
    const auto body = chat_request_body(config_.model_name, request, config_.top_k).dump();

    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
        const char* token = std::getenv(config_.auth_env.c_str());
        if (!token || !*token)
            throw Error(ErrorCode::config, "environment variable " + config_.auth_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string last_failure;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (attempt > 1) sleeper_(config_.retry.backoff(attempt - 1));

        httplib::Client client(endpoint.origin);
        const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        limiter_->acquire();
        limiter_->attempts.fetch_add(1);
        auto res = client.Post(endpoint.base_path + "/chat/completions", headers, body,
                               "application/json");
        limiter_->release();

        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            json parsed;
            try {
                parsed = json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::parse, std::string("backend returned invalid JSON: ") + e.what());
            }
            auto c = parse_chat_response(parsed);
            c.backend_id = id();
            c.request_fingerprint = request_fingerprint(config_.model_name, request);
            return c;
        }
        if (!is_retryable_status(res->status))
            throw PermanentError(res->status, "backend returned HTTP " + std::to_string(res->status) +
                                                  ": " + res->body.substr(0, 500));
        last_failure = "HTTP " + std::to_string(res->status);
    }
    throw Error(ErrorCode::transient, "backend " + id() + " failed after " +
                                          std::to_string(config_.retry.max_attempts) +
                                          " attempts: " + last_failure);
}

}  // namespace mcrc
