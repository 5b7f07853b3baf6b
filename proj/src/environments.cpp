#include "gpm/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpm/error.hpp"

namespace gpm::env {

namespace {

int bin_linear(double v, double lo, double hi, int bins) {
    v = std::clamp(v, lo, hi);
    return std::clamp(static_cast<int>(std::lround((v - lo) / (hi - lo) * bins)), 0, bins);
}

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double distance(const IntVec& a, const IntVec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

// --- grid --------------------------------------------------------------------

GridEnv::GridEnv(GridConfig config) : config_(config) {
    if (config_.size < 2 || config_.horizon < 1) throw ConfigError("grid needs size >= 2 and horizon >= 1");
    if (config_.start.x < 0 || config_.start.y < 0 || config_.start.x >= config_.size ||
        config_.start.y >= config_.size)
        throw ConfigError("grid start outside the grid");
    pos_ = config_.start;
    goal_ = goal_cells().front();
}

std::vector<Cell> GridEnv::goal_cells() const {
    std::vector<Cell> cells;
    for (int y = 0; y < config_.size; ++y)
        for (int x = 0; x < config_.size; ++x)
            if (Cell{x, y} != config_.start) cells.push_back({x, y});
    return cells;
}

IntVec GridEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    const auto cells = goal_cells();
    return reset_with_goal(cells[rng.below(cells.size())]);
}

IntVec GridEnv::reset_with_goal(Cell goal) {
    if (goal == config_.start || goal.x < 0 || goal.y < 0 || goal.x >= config_.size || goal.y >= config_.size)
        throw DomainError("grid goal must be a cell other than the start");
    goal_ = goal;
    pos_ = config_.start;
    t_ = 0;
    return {pos_.x, pos_.y};
}

StepResult GridEnv::step(int action) {
    if (action < 1 || action > 5) throw DomainError("grid action must be 1-5, got " + std::to_string(action));
    if (terminal()) throw DomainError("grid episode already terminated");
    static constexpr int dx[] = {1, 0, -1, 0, 0};
    static constexpr int dy[] = {0, 1, 0, -1, 0};
    pos_.x = std::clamp(pos_.x + dx[action - 1], 0, config_.size - 1);
    pos_.y = std::clamp(pos_.y + dy[action - 1], 0, config_.size - 1);
    ++t_;
    StepResult r{{pos_.x, pos_.y}, terminal(), std::nullopt};
    if (r.terminal) r.reward = episode_return();
    return r;
}

int GridEnv::episode_return() const { return reward_for(pos_, goal_, config_.metric); }

int GridEnv::reward_for(Cell a, Cell goal, Metric metric) {
    const double dx = a.x - goal.x;
    const double dy = a.y - goal.y;
    const double d = metric == Metric::euclidean ? std::sqrt(dx * dx + dy * dy) : std::fabs(dx) + std::fabs(dy);
    return static_cast<int>(std::lround(100.0 - 10.0 * d));
}

int grid_greedy_action(Cell pos, Cell goal) {
    if (goal.x > pos.x) return 1;
    if (goal.x < pos.x) return 3;
    if (goal.y > pos.y) return 2;
    if (goal.y < pos.y) return 4;
    return 5;
}

// --- cart-pole ------------------------------------------------------------------

CartPoleEnv::CartPoleEnv(CartPoleConfig config) : config_(config) {
    if (config_.horizon < 1 || !(config_.tau > 0) || !(config_.theta_max_deg > 0) || !(config_.theta_dot_max > 0))
        throw ConfigError("cart-pole needs positive horizon, tau, theta_max and theta_dot_max");
}

IntVec CartPoleEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    CartPoleState s;
    s.x = rng.uniform(-config_.init_range, config_.init_range);
    s.x_dot = rng.uniform(-config_.init_range, config_.init_range);
    s.theta = rng.uniform(-config_.init_range, config_.init_range);
    s.theta_dot = rng.uniform(-config_.init_range, config_.init_range);
    return reset_to(s);
}

IntVec CartPoleEnv::reset_to(const CartPoleState& state) {
    s_ = state;
    t_ = 0;
    return_ = 0;
    done_ = false;
    return observe();
}

IntVec CartPoleEnv::observe() const {
    const double theta_max = config_.theta_max_deg * std::numbers::pi / 180.0;
    return {bin_linear(s_.theta, -theta_max, theta_max, 100),
            bin_linear(s_.theta_dot, -config_.theta_dot_max, config_.theta_dot_max, 100)};
}

StepResult CartPoleEnv::step(int action) {
    if (action != 1 && action != 2) throw DomainError("cart-pole action must be 1 or 2, got " + std::to_string(action));
    if (done_) throw DomainError("cart-pole episode already terminated");
    const auto& c = config_;
    const double force = action == 2 ? c.force : -c.force;
    const double total = c.cart_mass + c.pole_mass;
    const double pml = c.pole_mass * c.half_length;
    const double cos = std::cos(s_.theta), sin = std::sin(s_.theta);
    const double temp = (force + pml * s_.theta_dot * s_.theta_dot * sin) / total;
    const double theta_acc =
        (c.gravity * sin - cos * temp) / (c.half_length * (4.0 / 3.0 - c.pole_mass * cos * cos / total));
    const double x_acc = temp - pml * theta_acc * cos / total;
    s_.x += c.tau * s_.x_dot;
    s_.x_dot += c.tau * x_acc;
    s_.theta += c.tau * s_.theta_dot;
    s_.theta_dot += c.tau * theta_acc;
    ++t_;

    const bool fallen = std::fabs(s_.theta) > c.theta_max_deg * std::numbers::pi / 180.0 ||
                        (c.x_limit > 0 && std::fabs(s_.x) > c.x_limit);
    if (!fallen) ++return_;
    done_ = fallen || t_ >= c.horizon;
    StepResult r{observe(), done_, std::nullopt};
    if (done_) r.reward = return_;
    return r;
}

int cartpole_bang_bang(const IntVec& observation) {
    if (observation.size() != 2) throw StructuralError("cart-pole observation has 2 dims");
    return (observation[0] - 50) + (observation[1] - 50) > 0 ? 2 : 1;
}

// --- push world -----------------------------------------------------------------

PushWorld::PushWorld(PushConfig config) : config_(config) {
    if (!(config_.hi > config_.lo) || !(config_.step_scale > 0) || config_.episode_steps < 1)
        throw ConfigError("push world needs hi > lo, step_scale > 0 and episode_steps >= 1");
}

IntVec PushWorld::reset(std::uint64_t seed) {
    Rng rng(seed);
    const double span = config_.hi - config_.lo;
    auto at = [&](double f) { return config_.lo + f * span; };
    effector_ = {at(rng.uniform(0.15, 0.3)), at(rng.uniform(0.35, 0.65)), config_.table_z + rng.uniform(0.0, 20.0)};
    object_ = {at(rng.uniform(0.4, 0.5)), at(rng.uniform(0.4, 0.6)), config_.table_z};
    goal_ = {at(rng.uniform(0.7, 0.8)), at(rng.uniform(0.4, 0.6)), config_.table_z};
    t_ = 0;
    last_contact_ = false;
    return observe();
}

IntVec PushWorld::step(const IntVec& action) {
    if (action.size() != 3) throw DomainError("push action needs 3 values");
    for (int a : action)
        if (a < 0 || a > 100) throw DomainError("push action values must be 0-100");
    Vec3 move{};
    for (int i = 0; i < 3; ++i) {
        const double target = std::clamp(effector_[i] + (action[i] - 50) * config_.step_scale, config_.lo, config_.hi);
        move[i] = target - effector_[i];
        effector_[i] = target;
    }
    last_contact_ = effector_object_distance() <= config_.contact_radius;
    if (last_contact_) {
        // horizontal push along the effector -> object direction, never a pull
        const double ux = object_[0] - effector_[0], uy = object_[1] - effector_[1];
        const double len = std::hypot(ux, uy);
        if (len > 1e-9) {
            const double along = (move[0] * ux + move[1] * uy) / len;
            if (along > 0) {
                object_[0] = std::clamp(object_[0] + along * ux / len, config_.lo, config_.hi);
                object_[1] = std::clamp(object_[1] + along * uy / len, config_.lo, config_.hi);
            }
        }
    }
    ++t_;
    return observe();
}

IntVec PushWorld::observe() const {
    IntVec o;
    for (const auto* v : {&effector_, &object_})
        for (double c : *v)
            o.push_back(static_cast<int>(std::lround(std::clamp(c, config_.lo, config_.hi))));
    return o;
}

double PushWorld::effector_object_distance() const {
    return norm3({effector_[0] - object_[0], effector_[1] - object_[1], effector_[2] - object_[2]});
}

double PushWorld::object_goal_distance() const {
    return std::hypot(object_[0] - goal_[0], object_[1] - goal_[1]);
}

// --- marker in cup --------------------------------------------------------------

int MarkerScene::reward(const IntVec& final_state) const {
    if (final_state.size() != 3) throw StructuralError("marker states have 3 dims");
    return static_cast<int>(std::lround(100.0 - kappa * distance(final_state, cup)));
}

int MarkerScene::min_reward() const {
    return static_cast<int>(std::lround(100.0 - kappa * bin_hi * std::sqrt(3.0)));
}

MarkerScene make_marker_scene(std::uint64_t seed, const MarkerConfig& config) {
    if (config.hold_start < 0 || config.hold_end < 0 ||
        static_cast<std::size_t>(config.hold_start + config.hold_end) + 2 > kMarkerLength)
        throw ConfigError("marker holds leave no room to move");
    if (!(config.min_distance > 0) || config.max_distance < config.min_distance)
        throw ConfigError("marker distances must satisfy 0 < min <= max");
    Rng rng(seed);
    MarkerScene scene;
    scene.bin_hi = config.bin_hi;
    scene.kappa = config.kappa > 0 ? config.kappa : 100.0 / (0.35 * config.bin_hi * std::sqrt(3.0));

    const double lo = 0.35 * config.bin_hi, hi = 0.65 * config.bin_hi;
    std::array<double, 3> start{}, cup{};
    for (;;) {
        for (auto& c : start) c = std::round(rng.uniform(lo, hi));
        // random direction, biased downward so the marker drops into the cup
        std::array<double, 3> dir{rng.normal(), rng.normal(), -std::fabs(rng.normal())};
        const double n = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        if (n < 1e-6) continue;
        const double d = rng.uniform(config.min_distance, config.max_distance);
        bool inside = true;
        for (int i = 0; i < 3; ++i) {
            cup[i] = std::round(start[i] + d * dir[i] / n);
            inside = inside && cup[i] >= 0 && cup[i] <= config.bin_hi;
        }
        if (inside) break;
    }
    for (int i = 0; i < 3; ++i) {
        scene.start.push_back(static_cast<int>(start[i]));
        scene.cup.push_back(static_cast<int>(cup[i]));
    }

    // hold, minimum-jerk reach, hold
    const int moving = static_cast<int>(kMarkerLength) - config.hold_start - config.hold_end;
    for (std::size_t t = 0; t < kMarkerLength; ++t) {
        const double u = std::clamp((static_cast<double>(t) - config.hold_start) / moving, 0.0, 1.0);
        const double s = u * u * u * (10 - 15 * u + 6 * u * u);
        IntVec state;
        for (int i = 0; i < 3; ++i) state.push_back(static_cast<int>(std::lround(start[i] + s * (cup[i] - start[i]))));
        scene.full.push_back(std::move(state));
    }
    return scene;
}

std::vector<MarkerDemo> marker_build_context(const MarkerScene& scene, const std::vector<double>& fractions) {
    if (scene.full.size() != kMarkerLength)
        throw StructuralError("marker trajectory must have " + std::to_string(kMarkerLength) + " states, got " +
                              std::to_string(scene.full.size()));
    const IntVec& start = scene.full.front();
    const double total = distance(start, scene.cup);
    std::vector<MarkerDemo> out;
    for (double f : fractions) {
        if (f < 0 || f > 1) throw DomainError("marker fraction must be within [0, 1]");
        std::size_t stop = kMarkerLength - 1;
        for (std::size_t t = 0; t < kMarkerLength; ++t) {
            if (distance(start, scene.full[t]) >= f * total - 1e-9) {
                stop = t;
                break;
            }
        }
        MarkerDemo demo;
        demo.states.assign(scene.full.begin(), scene.full.begin() + static_cast<std::ptrdiff_t>(stop) + 1);
        demo.states.resize(kMarkerLength, scene.full[stop]);
        demo.reward = scene.reward(demo.states.back());
        out.push_back(std::move(demo));
    }
    return out;
}

}  // namespace gpm::env
