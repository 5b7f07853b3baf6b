#include "gpm/improve.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <numeric>

#include "gpm/error.hpp"
#include "gpm/models.hpp"

namespace gpm::improve {

std::uint64_t Buffer::insert(TrajRecord record) {
    const std::uint64_t serial = record.serial = next_serial_++;
    const auto at = std::upper_bound(records_.begin(), records_.end(), record.reward,
                                     [](int r, const TrajRecord& x) { return r < x.reward; });
    records_.insert(at, std::move(record));
    return serial;
}

int Buffer::max_reward() const {
    if (records_.empty()) throw DomainError("buffer is empty");
    return records_.back().reward;
}

Ordering ordering_from_name(const std::string& name) {
    if (name == "sorted_asc") return Ordering::sorted_asc;
    if (name == "shuffled") return Ordering::shuffled;
    if (name == "sorted_no_rewards") return Ordering::sorted_no_rewards;
    if (name == "unsorted_with_rewards") return Ordering::unsorted_with_rewards;
    throw ConfigError("unknown context ordering '" + name + "'");
}

std::string ordering_name(Ordering o) {
    switch (o) {
        case Ordering::sorted_asc: return "sorted_asc";
        case Ordering::shuffled: return "shuffled";
        case Ordering::sorted_no_rewards: return "sorted_no_rewards";
        case Ordering::unsorted_with_rewards: return "unsorted_with_rewards";
    }
    return "?";
}

void ImproveConfig::validate() const {
    if (token_budget <= 0) throw ConfigError("token_budget must be > 0");
    if (target_offset_max < 1) throw ConfigError("target_offset_max must be >= 1");
    if (retries_per_action < 0) throw ConfigError("retries_per_action must be >= 0");
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (action_max_tokens < 1) throw ConfigError("action_max_tokens must be >= 1");
    profile.validate();
}

int ImproveConfig::count_tokens(std::string_view text) const {
    return token_counter ? token_counter(text) : codec::estimate_tokens(text);
}

int propose_target(const Buffer& buffer, Rng& rng, const ImproveConfig& config) {
    if (buffer.empty()) throw DomainError("cannot propose a target from an empty buffer");
    if (config.target_offset_max < 1) throw ConfigError("target_offset_max must be >= 1");
    return buffer.max_reward() + static_cast<int>(rng.uniform_int(1, config.target_offset_max));
}

Context build_context(const Buffer& buffer, const ImproveConfig& config, int target_reward,
                      std::string_view partial_body, Rng& rng) {
    const auto& recs = buffer.records();
    const auto& delim = config.profile.reward_delimiter;
    const std::string nl = config.profile.row_delimiter;
    const bool with_rewards = config.ordering != Ordering::sorted_no_rewards;
    auto line_for = [&](std::size_t i) {
        return with_rewards ? std::to_string(recs[i].reward) + delim + recs[i].body : recs[i].body;
    };

    Context ctx;
    const std::string trailer = std::to_string(target_reward) + delim + std::string(partial_body);
    const int trailer_tokens = config.count_tokens(trailer);
    if (trailer_tokens > config.token_budget) {
        ctx.prompt = trailer;
        ctx.truncated = true;
        ctx.tokens = trailer_tokens;
        return ctx;
    }

    std::vector<std::size_t> priority(recs.size());
    std::iota(priority.begin(), priority.end(), 0);
    if (config.selection == Selection::highest_reward)
        std::reverse(priority.begin(), priority.end());
    else
        std::sort(priority.begin(), priority.end(),
                  [&](std::size_t a, std::size_t b) { return recs[a].serial > recs[b].serial; });

    const int nl_tokens = config.count_tokens(nl);
    int used = trailer_tokens;
    std::vector<std::size_t> chosen;
    for (std::size_t i : priority) {
        const int cost = config.count_tokens(line_for(i)) + nl_tokens;
        if (used + cost > config.token_budget) break;
        used += cost;
        chosen.push_back(i);
    }

    auto assemble = [&] {
        std::vector<std::size_t> order = chosen;
        std::sort(order.begin(), order.end());
        if (config.ordering == Ordering::shuffled) {
            rng.shuffle(order);
        } else if (config.ordering == Ordering::unsorted_with_rewards) {
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return recs[a].serial < recs[b].serial; });
        }
        std::string prompt;
        for (std::size_t i : order) prompt += line_for(i) + nl;
        prompt += trailer;
        ctx.included = std::move(order);
        ctx.prompt = std::move(prompt);
        ctx.tokens = config.count_tokens(ctx.prompt);
    };
    assemble();
    // counters that are not additive over lines can overshoot; shed the
    // lowest-priority records until the whole prompt fits
    while (ctx.tokens > config.token_budget && !chosen.empty()) {
        chosen.pop_back();
        assemble();
    }
    ctx.truncated = !recs.empty() && chosen.empty();
    return ctx;
}

std::optional<int> parse_action(std::string_view completion, int num_actions) {
    std::size_t i = 0;
    while (i < completion.size() && !(std::isdigit(static_cast<unsigned char>(completion[i])) || completion[i] == '-'))
        ++i;
    std::size_t j = i + (i < completion.size() && completion[i] == '-');
    while (j < completion.size() && std::isdigit(static_cast<unsigned char>(completion[j]))) ++j;
    int v = 0;
    if (!codec::parse_int(completion.substr(i, j - i), v)) return std::nullopt;
    if (v < 1 || v > num_actions) return std::nullopt;
    return v;
}

namespace {

TrajRecord finish_record(env::Environment& environment, std::uint64_t env_seed, const std::vector<codec::Step>& steps,
                         const codec::CodecProfile& profile) {
    TrajRecord rec;
    rec.reward = environment.episode_return();
    rec.body = codec::encode_steps_body(steps, profile);
    rec.step_count = static_cast<int>(steps.size() / 2);
    rec.env_tag = environment.tag();
    rec.env_seed = env_seed;
    return rec;
}

}  // namespace

EpisodeResult run_episode(models::CompletionModel& model, env::Environment& environment, std::uint64_t env_seed,
                          Buffer& buffer, const ImproveConfig& config, Rng& rng) {
    config.validate();
    EpisodeResult res;
    res.target = propose_target(buffer, rng, config);
    res.steps.emplace_back(environment.reset(env_seed));
    const int n = environment.num_actions();

    while (!environment.terminal()) {
        std::optional<int> action;
        if (!res.transport_failed) {
            const auto ctx = build_context(buffer, config, res.target,
                                           codec::encode_steps_body(res.steps, config.profile, true), rng);
            res.truncated_contexts += ctx.truncated;
            models::CompletionRequest req;
            req.prompt = ctx.prompt;
            req.max_tokens = config.action_max_tokens;
            req.stop = {config.profile.open_terminator(), config.profile.row_delimiter};
            req.temperature = config.temperature;
            for (int attempt = 0; attempt <= config.retries_per_action && !action; ++attempt) {
                req.seed = rng.next();
                try {
                    action = parse_action(model.complete(req), n);
                } catch (const TransportError& e) {
                    res.transport_failed = true;
                    res.error = e.what();
                    break;
                }
            }
        }
        if (!action) {
            action = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            ++res.fallback_count;
        }
        const auto step = environment.step(*action);
        res.steps.emplace_back(*action);
        res.steps.emplace_back(step.observation);
    }
    res.record = finish_record(environment, env_seed, res.steps, config.profile);
    res.record.serial = buffer.insert(res.record);
    return res;
}

EpisodeResult run_random_episode(env::Environment& environment, std::uint64_t env_seed, Buffer& buffer,
                                 const ImproveConfig& config, Rng& rng) {
    EpisodeResult res;
    res.steps.emplace_back(environment.reset(env_seed));
    const auto n = static_cast<std::uint64_t>(environment.num_actions());
    while (!environment.terminal()) {
        const int action = 1 + static_cast<int>(rng.below(n));
        res.steps.emplace_back(action);
        res.steps.emplace_back(environment.step(action).observation);
    }
    res.record = finish_record(environment, env_seed, res.steps, config.profile);
    res.record.serial = buffer.insert(res.record);
    return res;
}

std::optional<int> replay_return(env::Environment& environment, const TrajRecord& record,
                                 const codec::CodecProfile& profile) {
    const auto steps = codec::decode_steps_body(record.body, profile);
    if (steps.empty() || environment.reset(record.env_seed) != std::get<IntVec>(steps.front())) return std::nullopt;
    for (std::size_t i = 1; i + 1 < steps.size(); i += 2) {
        if (environment.terminal()) return std::nullopt;
        const auto r = environment.step(std::get<int>(steps[i]));
        if (r.observation != std::get<IntVec>(steps[i + 1])) return std::nullopt;
    }
    if (!environment.terminal()) return std::nullopt;
    return environment.episode_return();
}

OnlineResult run_online(models::CompletionModel& model, const EnvFactory& make_env, int episodes, int warmup,
                        const ImproveConfig& config, std::uint64_t seed) {
    if (warmup < 1) throw ConfigError("warmup must be >= 1");
    if (episodes < 0) throw ConfigError("episodes must be >= 0");
    config.validate();
    Rng rng(seed);
    OnlineResult out;
    const auto environment = make_env();
    int best = INT_MIN;
    auto record = [&](const EpisodeResult& r, bool is_warmup) {
        best = std::max(best, r.record.reward);
        CurvePoint p;
        p.episode = static_cast<int>(out.points.size()) + 1;
        p.warmup = is_warmup;
        p.target = r.target;
        p.ret = r.record.reward;
        p.running_max = best;
        p.fallback_count = r.fallback_count;
        p.transport_failed = r.transport_failed;
        p.env_seed = r.record.env_seed;
        p.body = r.record.body;
        out.points.push_back(std::move(p));
    };
    for (int i = 0; i < warmup; ++i) {
        const std::uint64_t env_seed = rng.fork();
        Rng actions(rng.fork());
        record(run_random_episode(*environment, env_seed, out.buffer, config, actions), true);
    }
    for (int i = 0; i < episodes; ++i) {
        const std::uint64_t env_seed = rng.fork();
        Rng episode_rng(rng.fork());
        record(run_episode(model, *environment, env_seed, out.buffer, config, episode_rng), false);
    }
    return out;
}

nlohmann::json to_json(const CurvePoint& p) {
    return {{"episode", p.episode},
            {"phase", p.warmup ? "warmup" : "model"},
            {"target", p.target},
            {"return", p.ret},
            {"running_max", p.running_max},
            {"fallback_count", p.fallback_count},
            {"transport_failed", p.transport_failed},
            {"env_seed", p.env_seed},
            {"body", p.body}};
}

std::string curve_table(std::span<const CurvePoint> points) {
    std::string out = "episode\tphase\treturn\trunning_max\ttarget\tfallbacks\n";
    for (const auto& p : points) {
        out += std::to_string(p.episode) + '\t' + (p.warmup ? "warmup" : "model") + '\t' + std::to_string(p.ret) +
               '\t' + std::to_string(p.running_max) + '\t' + std::to_string(p.target) + '\t' +
               std::to_string(p.fallback_count) + '\n';
    }
    return out;
}

// --- marker in cup --------------------------------------------------------------

Context marker_context(const env::MarkerScene& scene, const ImproveConfig& config, Rng& rng) {
    Buffer buffer;
    for (const auto& demo : env::marker_build_context(scene)) {
        TrajRecord r;
        r.reward = demo.reward;
        r.body = codec::encode_states_body(demo.states, config.profile);
        r.step_count = static_cast<int>(demo.states.size());
        r.env_tag = "marker";
        buffer.insert(std::move(r));
    }
    const std::vector<IntVec> start = {scene.start};
    return build_context(buffer, config, 100, codec::encode_states_body(start, config.profile), rng);
}

MarkerResult marker_improve(models::CompletionModel& model, const env::MarkerScene& scene,
                            const ImproveConfig& config, Rng& rng) {
    config.validate();
    MarkerResult res;
    const auto ctx = marker_context(scene, config, rng);
    res.prompt = ctx.prompt;
    models::CompletionRequest req;
    req.prompt = ctx.prompt;
    req.max_tokens = static_cast<int>((env::kMarkerLength - 1) * (scene.start.size() + 1) + 8);
    req.stop = {config.profile.row_delimiter};
    req.temperature = config.temperature;
    req.seed = rng.next();
    try {
        res.completion = model.complete(req);
    } catch (const TransportError& e) {
        res.error = e.what();
    }

    const std::vector<IntVec> start = {scene.start};
    const std::string text = codec::encode_states_body(start, config.profile) + res.completion;
    for (auto item : codec::split(text, codec::trim(config.profile.step_delimiter))) {
        if (res.trajectory.size() == env::kMarkerLength) break;
        const auto fields = codec::split_ws(item);
        if (fields.size() != scene.start.size()) break;
        IntVec state;
        for (auto f : fields) {
            int v = 0;
            if (!codec::parse_int(f, v)) break;
            state.push_back(std::clamp(v, 0, scene.bin_hi));
        }
        if (state.size() != fields.size()) break;
        res.trajectory.push_back(std::move(state));
    }
    // a completion that runs into the start state's last field leaves nothing
    if (res.trajectory.empty()) res.trajectory.push_back(scene.start);
    res.parsed_states = static_cast<int>(res.trajectory.size());
    res.padded = res.trajectory.size() < env::kMarkerLength;
    const IntVec last = res.trajectory.back();
    res.trajectory.resize(env::kMarkerLength, last);
    res.reward = scene.reward(res.trajectory.back());
    return res;
}

std::string marker_oracle_completion(const env::MarkerScene& scene, const codec::CodecProfile& profile) {
    const std::vector<IntVec> start = {scene.full.front()};
    return codec::encode_states_body(scene.full, profile).substr(codec::encode_states_body(start, profile).size());
}

// --- clicker --------------------------------------------------------------------

ClickerContext clicker_build_context(std::span<const codec::ClickerTuple> history, const IntVec& observation,
                                     int token_budget, const codec::CodecProfile& profile,
                                     const TokenCounter& counter) {
    if (observation.size() != codec::kClickerObsDims)
        throw StructuralError("clicker observation must have 6 dims, got " + std::to_string(observation.size()));
    auto count = [&](std::string_view s) { return counter ? counter(s) : codec::estimate_tokens(s); };
    const std::string trailer = "1" + profile.reward_delimiter + codec::join_ints(observation, profile.cell_delimiter) +
                                std::string(codec::trim(profile.segment_delimiter));
    std::vector<std::string> neg, pos;
    for (const auto& t : history) {
        if (t.reward != 0 && t.reward != 1) continue;
        (t.reward ? pos : neg).push_back(codec::encode_clicker_tuple(t.reward, t.observation, t.action, profile));
    }

    auto assemble = [&](std::size_t n) {
        std::string p;
        for (std::size_t i = neg.size() - n; i < neg.size(); ++i) p += neg[i] + profile.row_delimiter;
        for (std::size_t i = pos.size() - n; i < pos.size(); ++i) p += pos[i] + profile.row_delimiter;
        return p + trailer;
    };

    // grow the equal count from the most recent pair backwards while it fits
    const int nl = count(profile.row_delimiter);
    int used = count(trailer);
    std::size_t n = 0;
    const std::size_t limit = std::min(neg.size(), pos.size());
    while (n < limit) {
        const int cost = count(neg[neg.size() - 1 - n]) + count(pos[pos.size() - 1 - n]) + 2 * nl;
        if (used + cost > token_budget) break;
        used += cost;
        ++n;
    }
    std::string prompt = assemble(n);
    while (n > 0 && count(prompt) > token_budget) prompt = assemble(--n);
    return {std::move(prompt), n};
}

std::optional<IntVec> parse_clicker_action(std::string_view completion) {
    completion = completion.substr(0, completion.find('\n'));
    IntVec out;
    std::size_t i = 0;
    while (out.size() < codec::kClickerActionDims && i < completion.size()) {
        if (!std::isdigit(static_cast<unsigned char>(completion[i])) && completion[i] != '-') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < completion.size() && std::isdigit(static_cast<unsigned char>(completion[j]))) ++j;
        int v = 0;
        if (!codec::parse_int(completion.substr(i, j - i), v) || v < 0 || v > 100) return std::nullopt;
        out.push_back(v);
        i = j;
    }
    if (out.size() != codec::kClickerActionDims) return std::nullopt;
    return out;
}

}  // namespace gpm::improve
