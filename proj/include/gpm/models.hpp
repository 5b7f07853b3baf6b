#pragma once

// The completion interface every harness targets, plus the concrete models:
// a remote completions-over-HTTP client and deterministic local stand-ins.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpm/rng.hpp"

namespace gpm::models {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 16;
    std::vector<std::string> stop;  // at most 4
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;  // honored by local models

    /// Throws DomainError when the request violates its invariants.
    void validate() const;
};

/// Cut `text` at the earliest occurrence of any stop sequence.
std::string truncate_at_stop(std::string_view text, std::span<const std::string> stop);

class CompletionModel {
public:
    virtual ~CompletionModel() = default;

    /// Generated text, already truncated at the first stop sequence.
    /// Throws TransportError when a remote backend cannot be reached.
    virtual std::string complete(const CompletionRequest& request) = 0;

    /// Per-candidate scores, or nullopt when the backend cannot score.
    virtual std::optional<std::vector<double>> score(const std::string& /*prompt*/,
                                                     std::span<const std::string> /*candidates*/) {
        return std::nullopt;
    }

    virtual std::string name() const = 0;
    /// Local models are pure functions of (request, seed, internal state).
    virtual bool is_local() const { return true; }
};

/// Constrained choice among `candidates`: argmax of backend scores when
/// available, otherwise a completion matched against the candidates (the
/// longest candidate that prefixes the trimmed completion, else the first).
std::string score_logprob_choice(CompletionModel& model, const std::string& prompt,
                                 std::span<const std::string> candidates);

// --- local models -----------------------------------------------------------

/// Lookup table prompt -> completion; empty text for unknown prompts.
/// Also serves as the ground-truth oracle that harnesses populate.
class ScriptedModel : public CompletionModel {
public:
    explicit ScriptedModel(std::string name = "mock_scripted") : name_(std::move(name)) {}

    void add(std::string prompt, std::string completion);
    void set_scores(std::map<std::string, double> scores) { scores_ = std::move(scores); }
    std::size_t size() const { return table_.size(); }

    /// JSON object {"completions": {prompt: text}, "scores": {candidate: value}}.
    static ScriptedModel from_file(const std::filesystem::path& path);

    std::string complete(const CompletionRequest& request) override;
    std::optional<std::vector<double>> score(const std::string& prompt,
                                             std::span<const std::string> candidates) override;
    std::string name() const override { return name_; }

private:
    std::string name_;
    std::map<std::string, std::string, std::less<>> table_;
    std::map<std::string, double> scores_;
};

struct RandomPolicyOptions {
    int dims = 1;  // integers per action
    int lo = 1;
    int hi = 5;
    std::uint64_t seed = 0;  // used when requests carry no seed
};

/// Emits a uniformly random action: " a" or " a, b, c".
class RandomPolicyModel : public CompletionModel {
public:
    explicit RandomPolicyModel(RandomPolicyOptions options = {});

    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "random_policy"; }

    RandomPolicyOptions& options() { return options_; }

private:
    RandomPolicyOptions options_;
    Rng fallback_rng_;
    std::mutex mu_;
};

struct SearchModelLimits {
    int max_ops = 3;
    int max_leaves = 3;
    std::uint64_t node_budget = 20'000'000;
};

/// Parses a sequence-transformation prompt ("in, out; in, out; query,"),
/// searches for a consistent operator program and applies it to the query.
class PcfgSearcherModel : public CompletionModel {
public:
    explicit PcfgSearcherModel(SearchModelLimits limits = {}) : limits_(limits) {}

    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "pcfg_searcher"; }

private:
    SearchModelLimits limits_;
};

/// Continues a ", "-separated series (scalar or space-separated frames) by
/// repeating its last detected period until max_tokens is used up.
class PeriodRepeatModel : public CompletionModel {
public:
    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "period_repeat"; }
};

/// Smallest lag in [2, n/2] minimizing the mean absolute difference between
/// the series and itself shifted by that lag (ties go to the smaller lag).
std::size_t estimate_period(std::span<const std::vector<int>> frames);

// --- remote -----------------------------------------------------------------

/// Token bucket. acquire() blocks until a token is available.
class RateLimiter {
public:
    RateLimiter(double rate_per_second, double burst);
    void acquire();
    /// Process-wide limiter shared by every client of one endpoint.
    static std::shared_ptr<RateLimiter> for_endpoint(const std::string& key, double rate_per_second,
                                                     double burst);

private:
    using Clock = std::chrono::steady_clock;
    double rate_;
    double burst_;
    double tokens_;
    Clock::time_point last_;
    std::mutex mu_;
};

struct RemoteConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string path = "/v1/completions";
    std::string model = "text-davinci-003";
    std::string credential_env = "GPM_API_KEY";  // name of the variable, never its value
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    double timeout_s = 30.0;
    int retries = 3;
    double backoff_initial_s = 0.5;
    double rate_per_second = 1.0;
    double burst = 1.0;
};

/// POST {model, prompt, max_tokens, stop, temperature} and read
/// choices[0].text. Retries transport failures and 429/5xx with exponential
/// backoff; other HTTP errors fail immediately.
class RemoteModel : public CompletionModel {
public:
    explicit RemoteModel(RemoteConfig config);

    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return config_.model; }
    bool is_local() const override { return false; }

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::shared_ptr<RateLimiter> limiter_;
};

// --- specs ------------------------------------------------------------------

struct ModelSpec {
    std::string kind = "mock_scripted";  // remote | mock_scripted | mock_oracle | random_policy | pcfg_searcher | period_repeat
    RemoteConfig remote;
    RandomPolicyOptions random;
    SearchModelLimits search;
    std::string script_path;  // mock_scripted table
};

ModelSpec model_spec_from_json(const nlohmann::json& j);
/// Serializable view of a spec. Holds the credential variable name only.
nlohmann::json to_json(const ModelSpec& spec);

/// Builds every kind except mock_oracle, whose table comes from a harness.
/// Throws ConfigError for unknown kinds.
std::unique_ptr<CompletionModel> make_model(const ModelSpec& spec);

// --- token counting -------------------------------------------------------

class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual int count(std::string_view text) const = 0;
};

/// codec::estimate_tokens
class HeuristicTokenCounter : public TokenCounter {
public:
    int count(std::string_view text) const override;
};

/// Runs `command` with the text on standard input; its standard output must
/// be a single integer. Throws ConfigError on failure.
class ExternalTokenCounter : public TokenCounter {
public:
    explicit ExternalTokenCounter(std::string command) : command_(std::move(command)) {}
    int count(std::string_view text) const override;

private:
    std::string command_;
};

}  // namespace gpm::models
