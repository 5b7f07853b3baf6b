#pragma once

// Return-conditioned sequence improvement: a reward-sorted trajectory buffer,
// budgeted context construction, the online episode loop with relabeling,
// offline marker extrapolation and clicker-context assembly.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpm/codec.hpp"
#include "gpm/environments.hpp"
#include "gpm/rng.hpp"

namespace gpm::models {
class CompletionModel;
}

namespace gpm::improve {

using codec::IntVec;

struct TrajRecord {
    int reward = 0;
    std::string body;  // encoded trajectory without the reward prefix
    int step_count = 0;
    std::string env_tag;
    std::uint64_t env_seed = 0;  // replays the episode on deterministic envs
    std::uint64_t serial = 0;    // insertion order, assigned by the buffer
};

/// Records kept in ascending reward order; ties keep insertion order.
class Buffer {
public:
    /// Returns the serial assigned to the stored copy.
    std::uint64_t insert(TrajRecord record);
    const std::vector<TrajRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    /// DomainError when empty.
    int max_reward() const;

private:
    std::vector<TrajRecord> records_;
    std::uint64_t next_serial_ = 0;
};

enum class Ordering { sorted_asc, shuffled, sorted_no_rewards, unsorted_with_rewards };
/// Which records get first claim on the token budget.
enum class Selection { highest_reward, most_recent };

Ordering ordering_from_name(const std::string& name);
std::string ordering_name(Ordering o);

using TokenCounter = std::function<int(std::string_view)>;

struct ImproveConfig {
    int token_budget = 1024;
    int target_offset_max = 20;
    Ordering ordering = Ordering::sorted_asc;
    Selection selection = Selection::highest_reward;
    int retries_per_action = 2;
    double temperature = 0.7;
    int action_max_tokens = 4;
    TokenCounter token_counter;  // empty: codec::estimate_tokens
    codec::CodecProfile profile;

    /// ConfigError on invalid values.
    void validate() const;
    int count_tokens(std::string_view text) const;
};

/// max reward in the buffer plus an offset uniform in 1..target_offset_max.
int propose_target(const Buffer& buffer, Rng& rng, const ImproveConfig& config);

struct Context {
    std::string prompt;
    std::vector<std::size_t> included;  // buffer indices, in prompt order
    bool truncated = false;             // records existed but none fit
    int tokens = 0;
};

/// History lines for the best records that fit the budget, ordered per
/// config.ordering, then the trailer "<target>: <partial_body>". `rng` is
/// consulted only by the shuffled ordering.
Context build_context(const Buffer& buffer, const ImproveConfig& config, int target_reward,
                      std::string_view partial_body, Rng& rng);

/// First integer in the completion if it is a legal 1-indexed action.
std::optional<int> parse_action(std::string_view completion, int num_actions);

struct EpisodeResult {
    TrajRecord record;
    std::vector<codec::Step> steps;
    int target = 0;
    int fallback_count = 0;   // actions chosen at random after parse failures
    bool transport_failed = false;
    std::string error;
    int truncated_contexts = 0;
};

/// Reset `environment` with `env_seed`, act from model completions until the
/// episode ends, relabel with the achieved return and insert into `buffer`.
EpisodeResult run_episode(models::CompletionModel& model, env::Environment& environment, std::uint64_t env_seed,
                          Buffer& buffer, const ImproveConfig& config, Rng& rng);

/// Uniform random actions; inserted into `buffer` like a model episode.
EpisodeResult run_random_episode(env::Environment& environment, std::uint64_t env_seed, Buffer& buffer,
                                 const ImproveConfig& config, Rng& rng);

/// Re-executes the record's actions from its seed; returns the env return,
/// or nullopt when the body no longer reproduces its own observations.
std::optional<int> replay_return(env::Environment& environment, const TrajRecord& record,
                                 const codec::CodecProfile& profile = {});

struct CurvePoint {
    int episode = 0;  // 1-based, warmup episodes first
    bool warmup = false;
    int target = 0;
    int ret = 0;
    int running_max = 0;
    int fallback_count = 0;
    bool transport_failed = false;
    std::uint64_t env_seed = 0;
    std::string body;
};

struct OnlineResult {
    std::vector<CurvePoint> points;
    Buffer buffer;
};

using EnvFactory = std::function<std::unique_ptr<env::Environment>()>;

/// `warmup` random episodes seed the buffer, then `episodes` model episodes.
OnlineResult run_online(models::CompletionModel& model, const EnvFactory& make_env, int episodes, int warmup,
                        const ImproveConfig& config, std::uint64_t seed);

nlohmann::json to_json(const CurvePoint& point);
/// Tab-separated columns: episode phase return running_max target fallbacks.
std::string curve_table(std::span<const CurvePoint> points);

// --- marker in cup --------------------------------------------------------------

struct MarkerResult {
    std::vector<IntVec> trajectory;  // kMarkerLength states
    int reward = 0;
    int parsed_states = 0;           // including the given start state
    bool padded = false;
    std::string prompt;
    std::string completion;
    std::string error;
};

/// Prompt for a reward-100 trajectory from the scene's fractional demos.
Context marker_context(const env::MarkerScene& scene, const ImproveConfig& config, Rng& rng);
MarkerResult marker_improve(models::CompletionModel& model, const env::MarkerScene& scene,
                            const ImproveConfig& config, Rng& rng);
/// The continuation of the start state that reproduces the full trajectory.
std::string marker_oracle_completion(const env::MarkerScene& scene, const codec::CodecProfile& profile = {});

// --- clicker --------------------------------------------------------------------

struct ClickerContext {
    std::string prompt;
    std::size_t per_class = 0;  // tuples of each reward included
};

/// Equal numbers of the most recent reward-0 and reward-1 tuples (as many as
/// fit), all 0-lines before all 1-lines, then "1: <observation>;".
ClickerContext clicker_build_context(std::span<const codec::ClickerTuple> history, const IntVec& observation,
                                     int token_budget = 1024, const codec::CodecProfile& profile = {},
                                     const TokenCounter& counter = {});

/// First three integers of the completion, each 0-100.
std::optional<IntVec> parse_clicker_action(std::string_view completion);

}  // namespace gpm::improve
