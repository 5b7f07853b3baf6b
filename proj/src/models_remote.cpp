#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "gpm/error.hpp"
#include "gpm/models.hpp"

namespace gpm::models {

RateLimiter::RateLimiter(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(Clock::now()) {
    if (!(rate_per_second > 0.0)) throw ConfigError("rate limit must be positive");
}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
        const auto now = Clock::now();
        tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait_s = (1.0 - tokens_) / rate_;
        // Holding the lock while sleeping keeps waiters in arrival order.
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    }
}

std::shared_ptr<RateLimiter> RateLimiter::for_endpoint(const std::string& key, double rate_per_second, double burst) {
    static std::mutex mu;
    static std::map<std::string, std::weak_ptr<RateLimiter>> registry;
    std::lock_guard lock(mu);
    if (auto existing = registry[key].lock()) return existing;
    auto fresh = std::make_shared<RateLimiter>(rate_per_second, burst);
    registry[key] = fresh;
    return fresh;
}

RemoteModel::RemoteModel(RemoteConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("remote model: empty base_url");
    if (config_.timeout_s <= 0.0) throw ConfigError("remote model: timeout must be positive");
    if (config_.retries < 1) throw ConfigError("remote model: retries must be >= 1");
    limiter_ = RateLimiter::for_endpoint(config_.base_url + config_.path, config_.rate_per_second, config_.burst);
}

std::string RemoteModel::complete(const CompletionRequest& request) {
    request.validate();
    using Clock = std::chrono::steady_clock;
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(config_.timeout_s * config_.retries));

    nlohmann::json body = {{"model", config_.model},
                           {"prompt", request.prompt},
                           {"max_tokens", request.max_tokens},
                           {"temperature", request.temperature}};
    if (!request.stop.empty()) body["stop"] = request.stop;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!config_.credential_env.empty()) {
        if (const char* key = std::getenv(config_.credential_env.c_str()); key && *key)
            headers.emplace(config_.auth_header, config_.auth_prefix + key);
    }

    std::string last_error = "no attempt made";
    double backoff = config_.backoff_initial_s;
    for (int attempt = 0; attempt < config_.retries; ++attempt) {
        if (attempt > 0) {
            const auto wake = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                                 std::chrono::duration<double>(backoff));
            if (wake >= deadline) break;
            std::this_thread::sleep_until(wake);
            backoff *= 2.0;
        }
        limiter_->acquire();
        const double remaining = std::chrono::duration<double>(deadline - Clock::now()).count();
        if (remaining <= 0.0) break;
        const double per_try = std::min(config_.timeout_s, remaining);
        const auto usec = std::chrono::microseconds(static_cast<long long>(per_try * 1e6));

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                                      static_cast<time_t>(usec.count() % 1000000));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                                static_cast<time_t>(usec.count() % 1000000));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                                 static_cast<time_t>(usec.count() % 1000000));

        const auto res = client.Post(config_.path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            throw TransportError(config_.base_url + config_.path + ": HTTP " + std::to_string(res->status));
        try {
            const auto j = nlohmann::json::parse(res->body);
            if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return {};
            const auto& choice = j["choices"][0];
            if (!choice.contains("text") || !choice["text"].is_string()) return {};
            return truncate_at_stop(choice["text"].get<std::string>(), request.stop);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
    }
    throw TransportError(config_.base_url + config_.path + ": " + last_error);
}

}  // namespace gpm::models
