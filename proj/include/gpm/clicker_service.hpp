#pragma once

// Live clicker-training sessions over a push world, and the HTTP endpoints
// that expose them to a browser:
//
//   POST /sessions                      create (JSON config body, optional)
//   GET  /sessions/{id}/state           snapshot
//   GET  /sessions/{id}/events          server-sent snapshots
//   POST /sessions/{id}/click           reward the step in progress
//   POST /sessions/{id}/pause|resume|reset
//   POST /sessions/{id}/step            advance one step (batch mode only)

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gpm/codec.hpp"
#include "gpm/environments.hpp"
#include "gpm/error.hpp"
#include "gpm/models.hpp"
#include "gpm/rng.hpp"

namespace httplib {
class Server;
}

namespace gpm::clicker {

enum class Phase { random_warmup, model_driven, paused, done };
std::string phase_name(Phase p);

/// Which tuple a click lands on: the step in progress, or the one before it.
enum class Attribution { current_step, previous_step };

struct SessionConfig {
    env::PushConfig world;
    int warmup_episodes = 2;
    int episodes = 0;  // 0 runs until stopped
    bool batch = false;
    std::uint64_t seed = 0;
    int token_budget = 1024;
    double temperature = 0.7;
    int retries_per_action = 2;
    Attribution attribution = Attribution::current_step;
    models::ModelSpec model;

    SessionConfig();
};

/// Rejected configuration, naming the offending field.
class FieldError : public ConfigError {
public:
    FieldError(std::string field, const std::string& what) : ConfigError(what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Parses a create-session body; unknown keys are rejected.
SessionConfig session_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SessionConfig& config);

class SessionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Session {
public:
    Session(std::string id, SessionConfig config, std::unique_ptr<models::CompletionModel> model);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }
    const SessionConfig& config() const { return config_; }

    /// Marks the step in progress as rewarded. SessionError when paused,
    /// finished, or before the first step.
    nlohmann::json click();
    /// One step boundary: label the previous tuple, reset the world if the
    /// episode ended, choose and execute the next action.
    nlohmann::json step();
    nlohmann::json pause();
    /// Restores the pre-pause phase; starts the step clock in live mode.
    nlohmann::json resume();
    /// Back to episode 1 with an empty history.
    nlohmann::json reset();
    nlohmann::json snapshot() const;

    /// Blocks until the snapshot version exceeds `seen` or the timeout
    /// passes; returns the new snapshot and its version.
    std::optional<std::pair<std::uint64_t, nlohmann::json>> wait_update(std::uint64_t seen,
                                                                        std::chrono::milliseconds timeout);
    std::vector<codec::ClickerTuple> history() const;
    void shutdown();

private:
    struct Pending {
        codec::ClickerTuple tuple;
        int episode = 0;
        bool clicked = false;
    };
    struct EpisodeStats {
        int tuples = 0;
        int rewarded = 0;
    };

    nlohmann::json snapshot_locked() const;
    void bump_locked();
    void settle_locked(bool flush_all);
    void clock_loop();

    std::string id_;
    SessionConfig config_;
    std::unique_ptr<models::CompletionModel> model_;

    mutable std::mutex mu_;
    std::mutex step_mu_;  // serializes step(); the model call runs without mu_
    std::condition_variable changed_;
    env::PushWorld world_;
    Rng rng_;
    Phase phase_ = Phase::random_warmup;
    Phase resume_phase_ = Phase::random_warmup;
    bool started_ = false;
    int episode_ = 1;
    std::uint64_t total_steps_ = 0;
    std::uint64_t version_ = 1;
    std::vector<Pending> pending_;
    std::vector<codec::ClickerTuple> history_;
    std::vector<EpisodeStats> stats_;
    std::optional<codec::IntVec> last_action_;
    std::string last_source_;
    std::string last_prompt_;
    std::uint64_t generation_ = 0;  // bumped by reset; discards in-flight steps
    int fallbacks_ = 0;
    bool click_pending_ = false;

    bool stopping_ = false;
    std::condition_variable clock_cv_;
    std::thread clock_;
};

class SessionManager {
public:
    /// 128-bit random hex ids.
    std::shared_ptr<Session> create(const SessionConfig& config);
    std::shared_ptr<Session> find(const std::string& id) const;
    std::size_t size() const;
    void shutdown_all();

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Registers the session endpoints on `server`. An optional static directory
/// is mounted at "/" for a browser front end.
class ClickerService {
public:
    explicit ClickerService(std::string static_dir = {});
    ~ClickerService();

    /// Binds and serves on a background thread; returns the bound port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    SessionManager& sessions() { return sessions_; }

private:
    void install_routes();

    SessionManager sessions_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> closing_{false};
};

}  // namespace gpm::clicker
