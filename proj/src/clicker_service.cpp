#include "gpm/clicker_service.hpp"

#include <httplib.h>

#include <random>
#include <set>

#include "gpm/improve.hpp"

namespace gpm::clicker {

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::random_warmup: return "random_warmup";
        case Phase::model_driven: return "model_driven";
        case Phase::paused: return "paused";
        case Phase::done: return "done";
    }
    return "?";
}

SessionConfig::SessionConfig() {
    model.kind = "random_policy";
    model.random = {3, 0, 100, 0};
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FieldError(key, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

SessionConfig session_config_from_json(const nlohmann::json& j) {
    SessionConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw FieldError("", "session config must be a JSON object");
    static const std::set<std::string> known = {"seed",          "batch",          "warmup_episodes", "episodes",
                                                "step_period_s", "episode_steps",  "token_budget",    "temperature",
                                                "retries_per_action", "attribution", "model",         "world"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw FieldError(k, "unknown field '" + k + "'");

    c.seed = field<std::uint64_t>(j, "seed", c.seed);
    c.batch = field<bool>(j, "batch", c.batch);
    c.warmup_episodes = field<int>(j, "warmup_episodes", c.warmup_episodes);
    c.episodes = field<int>(j, "episodes", c.episodes);
    c.world.step_period_s = field<double>(j, "step_period_s", c.world.step_period_s);
    c.world.episode_steps = field<int>(j, "episode_steps", c.world.episode_steps);
    c.token_budget = field<int>(j, "token_budget", c.token_budget);
    c.temperature = field<double>(j, "temperature", c.temperature);
    c.retries_per_action = field<int>(j, "retries_per_action", c.retries_per_action);
    const auto attribution = field<std::string>(j, "attribution", "current_step");
    if (attribution == "current_step")
        c.attribution = Attribution::current_step;
    else if (attribution == "previous_step")
        c.attribution = Attribution::previous_step;
    else
        throw FieldError("attribution", "attribution must be 'current_step' or 'previous_step'");
    if (j.contains("world")) {
        const auto& w = j["world"];
        if (!w.is_object()) throw FieldError("world", "world must be an object");
        c.world.step_scale = field<double>(w, "step_scale", c.world.step_scale);
        c.world.contact_radius = field<double>(w, "contact_radius", c.world.contact_radius);
        c.world.goal_radius = field<double>(w, "goal_radius", c.world.goal_radius);
    }
    if (j.contains("model")) {
        try {
            c.model = models::model_spec_from_json(j["model"]);
        } catch (const ConfigError& e) {
            throw FieldError("model", e.what());
        }
    }

    if (c.warmup_episodes < 0) throw FieldError("warmup_episodes", "warmup_episodes must be >= 0");
    if (c.episodes < 0) throw FieldError("episodes", "episodes must be >= 0");
    if (!(c.world.step_period_s > 0)) throw FieldError("step_period_s", "step_period_s must be > 0");
    if (c.world.episode_steps < 1) throw FieldError("episode_steps", "episode_steps must be >= 1");
    if (c.token_budget < 1) throw FieldError("token_budget", "token_budget must be >= 1");
    if (c.temperature < 0) throw FieldError("temperature", "temperature must be >= 0");
    if (c.retries_per_action < 0) throw FieldError("retries_per_action", "retries_per_action must be >= 0");
    if (!(c.world.step_scale > 0)) throw FieldError("world.step_scale", "step_scale must be > 0");
    return c;
}

nlohmann::json to_json(const SessionConfig& c) {
    return {{"seed", c.seed},
            {"batch", c.batch},
            {"warmup_episodes", c.warmup_episodes},
            {"episodes", c.episodes},
            {"step_period_s", c.world.step_period_s},
            {"episode_steps", c.world.episode_steps},
            {"token_budget", c.token_budget},
            {"temperature", c.temperature},
            {"retries_per_action", c.retries_per_action},
            {"attribution", c.attribution == Attribution::current_step ? "current_step" : "previous_step"},
            {"world",
             {{"step_scale", c.world.step_scale},
              {"contact_radius", c.world.contact_radius},
              {"goal_radius", c.world.goal_radius}}},
            {"model", models::to_json(c.model)}};
}

// --- session --------------------------------------------------------------------

Session::Session(std::string id, SessionConfig config, std::unique_ptr<models::CompletionModel> model)
    : id_(std::move(id)), config_(std::move(config)), model_(std::move(model)), world_(config_.world),
      rng_(config_.seed) {
    world_.reset(rng_.fork());
    stats_.resize(1);
    if (config_.warmup_episodes == 0) phase_ = resume_phase_ = Phase::model_driven;
}

Session::~Session() { shutdown(); }

void Session::shutdown() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    clock_cv_.notify_all();
    changed_.notify_all();
    if (clock_.joinable() && clock_.get_id() != std::this_thread::get_id()) clock_.join();
}

void Session::bump_locked() {
    ++version_;
    changed_.notify_all();
}

void Session::settle_locked(bool flush_all) {
    if (!pending_.empty()) {
        const bool current = config_.attribution == Attribution::current_step;
        if (current)
            pending_.back().clicked = pending_.back().clicked || click_pending_;
        else if (pending_.size() >= 2)
            pending_[pending_.size() - 2].clicked = pending_[pending_.size() - 2].clicked || click_pending_;
        const std::size_t keep = (!current && !flush_all) ? 1 : 0;
        const std::size_t n = pending_.size() - std::min(keep, pending_.size());
        for (std::size_t i = 0; i < n; ++i) {
            auto t = pending_[i].tuple;
            t.reward = pending_[i].clicked ? 1 : 0;
            stats_[static_cast<std::size_t>(pending_[i].episode - 1)].rewarded += t.reward;
            history_.push_back(std::move(t));
        }
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
    }
    click_pending_ = false;
}

nlohmann::json Session::step() {
    std::lock_guard step_lock(step_mu_);
    codec::IntVec observation;
    std::string prompt;
    bool use_model = false;
    std::uint64_t seed = 0;
    std::uint64_t generation = 0;
    {
        std::lock_guard lock(mu_);
        if (!started_) throw SessionError("session not started; resume it first");
        if (phase_ == Phase::paused) throw SessionError("session is paused");
        if (phase_ == Phase::done) throw SessionError("session is finished");
        settle_locked(false);
        if (world_.episode_done()) {
            if (config_.episodes > 0 && episode_ >= config_.episodes) {
                settle_locked(true);
                phase_ = Phase::done;
                bump_locked();
                return snapshot_locked();
            }
            ++episode_;
            stats_.emplace_back();
            world_.reset(rng_.fork());
            if (episode_ > config_.warmup_episodes) phase_ = Phase::model_driven;
        }
        use_model = phase_ == Phase::model_driven;
        observation = world_.observe();
        if (use_model) {
            prompt = improve::clicker_build_context(history_, observation, config_.token_budget).prompt;
            last_prompt_ = prompt;
        }
        seed = rng_.next();
        generation = generation_;
    }

    std::optional<codec::IntVec> action;
    std::string source = "random";
    if (use_model) {
        models::CompletionRequest req;
        req.prompt = prompt;
        req.max_tokens = 16;
        req.stop = {"\n"};
        req.temperature = config_.temperature;
        for (int attempt = 0; attempt <= config_.retries_per_action && !action; ++attempt) {
            req.seed = seed + static_cast<std::uint64_t>(attempt);
            try {
                action = improve::parse_clicker_action(model_->complete(req));
            } catch (const std::exception&) {
                break;  // unreachable backend: act randomly this step
            }
        }
        source = action ? "model" : "fallback";
    }
    if (!action) {
        Rng r(seed ^ 0x5DEECE66DULL);
        action = codec::IntVec{static_cast<int>(r.uniform_int(0, 100)), static_cast<int>(r.uniform_int(0, 100)),
                               static_cast<int>(r.uniform_int(0, 100))};
    }

    std::lock_guard lock(mu_);
    if (generation != generation_) return snapshot_locked();  // reset while the model was thinking
    if (source == "fallback") ++fallbacks_;
    world_.step(*action);
    pending_.push_back({{0, observation, *action}, episode_, false});
    ++stats_[static_cast<std::size_t>(episode_ - 1)].tuples;
    last_action_ = action;
    last_source_ = source;
    ++total_steps_;
    bump_locked();
    return snapshot_locked();
}

nlohmann::json Session::click() {
    std::lock_guard lock(mu_);
    if (!started_) throw SessionError("session not started");
    if (phase_ == Phase::paused) throw SessionError("session is paused");
    if (phase_ == Phase::done) throw SessionError("session is finished");
    if (pending_.empty()) throw SessionError("no step has been executed yet");
    const bool duplicate = click_pending_;
    click_pending_ = true;
    bump_locked();
    return {{"ok", true}, {"step", total_steps_}, {"duplicate", duplicate}};
}

nlohmann::json Session::pause() {
    std::lock_guard lock(mu_);
    if (phase_ != Phase::paused && phase_ != Phase::done) {
        resume_phase_ = phase_;
        phase_ = Phase::paused;
        bump_locked();
    }
    return snapshot_locked();
}

nlohmann::json Session::resume() {
    std::lock_guard lock(mu_);
    if (phase_ == Phase::paused) phase_ = resume_phase_;
    started_ = true;
    if (!config_.batch && !clock_.joinable() && !stopping_) clock_ = std::thread([this] { clock_loop(); });
    bump_locked();
    clock_cv_.notify_all();
    return snapshot_locked();
}

nlohmann::json Session::reset() {
    std::lock_guard lock(mu_);
    ++generation_;
    rng_ = Rng(config_.seed);
    world_.reset(rng_.fork());
    history_.clear();
    pending_.clear();
    stats_.assign(1, {});
    episode_ = 1;
    total_steps_ = 0;
    last_action_.reset();
    last_source_.clear();
    last_prompt_.clear();
    fallbacks_ = 0;
    click_pending_ = false;
    phase_ = resume_phase_ = config_.warmup_episodes > 0 ? Phase::random_warmup : Phase::model_driven;
    bump_locked();
    return snapshot_locked();
}

nlohmann::json Session::snapshot() const {
    std::lock_guard lock(mu_);
    return snapshot_locked();
}

std::vector<codec::ClickerTuple> Session::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

nlohmann::json Session::snapshot_locked() const {
    auto vec = [](const env::Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); };
    nlohmann::json episodes = nlohmann::json::array();
    int rewarded = 0;
    for (std::size_t i = 0; i < stats_.size(); ++i) {
        episodes.push_back({{"episode", i + 1}, {"tuples", stats_[i].tuples}, {"rewarded", stats_[i].rewarded}});
        rewarded += stats_[i].rewarded;
    }
    const std::size_t excerpt = 240;
    return {{"id", id_},
            {"phase", phase_name(phase_)},
            {"started", started_},
            {"batch", config_.batch},
            {"episode", episode_},
            {"step", world_.t()},
            {"episode_steps", config_.world.episode_steps},
            {"total_steps", total_steps_},
            {"step_period_s", config_.world.step_period_s},
            {"bounds", {config_.world.lo, config_.world.hi}},
            {"effector", vec(world_.effector())},
            {"object", vec(world_.object())},
            {"goal", vec(world_.goal())},
            {"goal_radius", config_.world.goal_radius},
            {"observation", world_.observe()},
            {"last_action", last_action_ ? nlohmann::json(*last_action_) : nlohmann::json(nullptr)},
            {"last_action_source", last_source_},
            {"click_pending", click_pending_},
            {"fallbacks", fallbacks_},
            {"history",
             {{"tuples", history_.size()},
              {"rewarded", rewarded},
              {"unlabeled", pending_.size()},
              {"episodes", episodes}}},
            {"prompt", last_prompt_},
            {"prompt_excerpt",
             last_prompt_.size() > excerpt ? last_prompt_.substr(last_prompt_.size() - excerpt) : last_prompt_},
            {"version", version_}};
}

std::optional<std::pair<std::uint64_t, nlohmann::json>> Session::wait_update(std::uint64_t seen,
                                                                             std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    changed_.wait_for(lock, timeout, [&] { return version_ > seen || stopping_; });
    if (version_ <= seen) return std::nullopt;
    return std::make_pair(version_, snapshot_locked());
}

void Session::clock_loop() {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(config_.world.step_period_s));
    auto next = std::chrono::steady_clock::now() + period;
    for (;;) {
        {
            std::unique_lock lock(mu_);
            clock_cv_.wait_until(lock, next, [&] { return stopping_; });
            if (stopping_) return;
            next += period;
            if (phase_ == Phase::paused || phase_ == Phase::done || !started_) {
                next = std::chrono::steady_clock::now() + period;
                continue;
            }
        }
        try {
            step();
        } catch (const SessionError&) {
            // paused or finished between the check and the step
        }
    }
}

// --- manager ----------------------------------------------------------------------

std::shared_ptr<Session> SessionManager::create(const SessionConfig& config) {
    std::unique_ptr<models::CompletionModel> model;
    try {
        model = models::make_model(config.model);
    } catch (const ConfigError& e) {
        throw FieldError("model", e.what());
    }
    static std::mutex rd_mu;
    std::string id;
    {
        std::lock_guard lock(rd_mu);
        static std::random_device rd;
        static const char* hex = "0123456789abcdef";
        for (int i = 0; i < 32; ++i) id += hex[rd() & 15];
    }
    auto s = std::make_shared<Session>(id, config, std::move(model));
    std::lock_guard lock(mu_);
    sessions_[id] = s;
    return s;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionManager::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

void SessionManager::shutdown_all() {
    std::map<std::string, std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        all = sessions_;
    }
    for (auto& [id, s] : all) s->shutdown();
}

// --- http ---------------------------------------------------------------------------

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

ClickerService::ClickerService(std::string static_dir) : server_(std::make_unique<httplib::Server>()) {
    if (!static_dir.empty() && !server_->set_mount_point("/", static_dir))
        throw ConfigError("static directory not found: " + static_dir);
    server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    install_routes();
}

ClickerService::~ClickerService() { stop(); }

void ClickerService::install_routes() {
    auto& svr = *server_;
    // Runs `fn` against the session named in the path, mapping failures to
    // status codes.
    auto with_session = [this](auto fn) {
        return [this, fn](const httplib::Request& req, httplib::Response& res) {
            const auto s = sessions_.find(req.matches[1]);
            if (!s) return reply(res, 404, {{"error", "session not found"}});
            try {
                reply(res, 200, fn(*s, req));
            } catch (const SessionError& e) {
                reply(res, 409, {{"error", e.what()}});
            }
        };
    };

    svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto body = req.body.empty() ? nlohmann::json() : nlohmann::json::parse(req.body);
            const auto s = sessions_.create(session_config_from_json(body));
            reply(res, 201, {{"id", s->id()}, {"config", to_json(s->config())}, {"state", s->snapshot()}});
        } catch (const nlohmann::json::parse_error& e) {
            reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}, {"field", ""}});
        } catch (const FieldError& e) {
            reply(res, 400, {{"error", e.what()}, {"field", e.field()}});
        } catch (const ConfigError& e) {
            reply(res, 400, {{"error", e.what()}, {"field", ""}});
        }
    });
    svr.Get(R"(/sessions/([0-9a-f]+)/state)",
            with_session([](Session& s, const httplib::Request&) { return s.snapshot(); }));
    svr.Post(R"(/sessions/([0-9a-f]+)/click)",
             with_session([](Session& s, const httplib::Request&) { return s.click(); }));
    svr.Post(R"(/sessions/([0-9a-f]+)/pause)",
             with_session([](Session& s, const httplib::Request&) { return s.pause(); }));
    svr.Post(R"(/sessions/([0-9a-f]+)/resume)",
             with_session([](Session& s, const httplib::Request&) { return s.resume(); }));
    svr.Post(R"(/sessions/([0-9a-f]+)/reset)",
             with_session([](Session& s, const httplib::Request&) { return s.reset(); }));
    svr.Post(R"(/sessions/([0-9a-f]+)/step)", with_session([](Session& s, const httplib::Request&) {
                 if (!s.config().batch) throw SessionError("explicit stepping is only available in batch mode");
                 return s.step();
             }));

    svr.Get(R"(/sessions/([0-9a-f]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = sessions_.find(req.matches[1]);
        if (!s) return reply(res, 404, {{"error", "session not found"}});
        res.set_header("Cache-Control", "no-cache");
        auto seen = std::make_shared<std::uint64_t>(0);
        res.set_chunked_content_provider("text/event-stream", [this, s, seen](std::size_t, httplib::DataSink& sink) {
            if (closing_) return false;
            const auto update = s->wait_update(*seen, std::chrono::milliseconds(250));
            if (closing_) return false;
            std::string msg;
            if (update) {
                *seen = update->first;
                msg = "id: " + std::to_string(update->first) + "\nevent: snapshot\ndata: " + update->second.dump() +
                      "\n\n";
            } else {
                msg = ": keepalive\n\n";
            }
            return sink.write(msg.data(), msg.size());
        });
    });
}

int ClickerService::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void ClickerService::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) {
        if (!closing_) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
    }
}

void ClickerService::stop() {
    if (closing_.exchange(true)) return;
    sessions_.shutdown_all();
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace gpm::clicker
