#pragma once

// Small deterministic simulations driven by the sequence-improvement loops:
// grid navigation, cart-pole, a kinematic push world and the marker scene.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpm/codec.hpp"
#include "gpm/rng.hpp"

namespace gpm::env {

using codec::IntVec;

struct StepResult {
    IntVec observation;
    bool terminal = false;
    std::optional<int> reward;  // set on the terminal step
};

/// Episodic environment with 1-indexed discrete actions 1..num_actions().
class Environment {
public:
    virtual ~Environment() = default;

    virtual IntVec reset(std::uint64_t seed) = 0;
    /// DomainError for an action outside 1..num_actions() or after termination.
    virtual StepResult step(int action) = 0;
    virtual int num_actions() const = 0;
    virtual bool terminal() const = 0;
    /// Return of the episode so far (final once terminal()).
    virtual int episode_return() const = 0;
    virtual int horizon() const = 0;
    virtual std::string tag() const = 0;
};

// --- grid --------------------------------------------------------------------

enum class Metric { euclidean, manhattan };

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

struct GridConfig {
    int size = 9;
    int horizon = 20;
    Cell start{4, 4};
    Metric metric = Metric::euclidean;
};

/// Actions: 1 right (x+1), 2 up (y+1), 3 left, 4 down, 5 no-op. Moves into a
/// wall leave the agent in place. The reward arrives at the final step.
class GridEnv : public Environment {
public:
    explicit GridEnv(GridConfig config = {});

    /// Goal drawn uniformly over the cells other than the start.
    IntVec reset(std::uint64_t seed) override;
    IntVec reset_with_goal(Cell goal);
    StepResult step(int action) override;
    int num_actions() const override { return 5; }
    bool terminal() const override { return t_ >= config_.horizon; }
    int episode_return() const override;
    int horizon() const override { return config_.horizon; }
    std::string tag() const override { return "grid"; }

    Cell pos() const { return pos_; }
    Cell goal() const { return goal_; }
    int t() const { return t_; }
    const GridConfig& config() const { return config_; }
    std::vector<Cell> goal_cells() const;

    /// round(100 - 10 * distance(a, goal)).
    static int reward_for(Cell a, Cell goal, Metric metric);

private:
    GridConfig config_;
    Cell pos_;
    Cell goal_;
    int t_ = 0;
};

/// Scripted policy: close the x gap, then the y gap, then wait.
int grid_greedy_action(Cell pos, Cell goal);

// --- cart-pole ------------------------------------------------------------------

struct CartPoleConfig {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double force = 10.0;
    double tau = 0.02;
    double theta_max_deg = 12.0;
    double theta_dot_max = 2.0;  // observation clip, rad/s
    double init_range = 0.05;    // start state uniform in +-init_range
    double x_limit = 0.0;        // 0 disables the cart-position failure
    int horizon = 200;
};

struct CartPoleState {
    double x = 0.0;
    double x_dot = 0.0;
    double theta = 0.0;
    double theta_dot = 0.0;
};

/// Observation: binned pole angle and angular velocity, each 0-100.
/// Actions: 1 pushes left, 2 pushes right. +1 for every step after which the
/// pole is still upright.
class CartPoleEnv : public Environment {
public:
    explicit CartPoleEnv(CartPoleConfig config = {});

    IntVec reset(std::uint64_t seed) override;
    IntVec reset_to(const CartPoleState& state);
    StepResult step(int action) override;
    int num_actions() const override { return 2; }
    bool terminal() const override { return done_; }
    int episode_return() const override { return return_; }
    int horizon() const override { return config_.horizon; }
    std::string tag() const override { return "cartpole"; }

    IntVec observe() const;
    const CartPoleState& state() const { return s_; }
    const CartPoleConfig& config() const { return config_; }

private:
    CartPoleConfig config_;
    CartPoleState s_;
    int t_ = 0;
    int return_ = 0;
    bool done_ = false;
};

/// Push toward the pole's lean, anticipating with the angular velocity.
int cartpole_bang_bang(const IntVec& observation);

// --- push world -----------------------------------------------------------------

using Vec3 = std::array<double, 3>;

struct PushConfig {
    double lo = 0.0;
    double hi = 300.0;
    double step_scale = 0.5;  // workspace units per action unit away from 50
    double contact_radius = 25.0;
    double goal_radius = 30.0;
    double table_z = 100.0;   // the object rests at this height
    int episode_steps = 15;
    double step_period_s = 2.0;
};

/// Effector moves by (action - 50) * step_scale per axis. An effector within
/// contact radius of the object pushes it along the horizontal contact
/// direction by the component of its displacement along that direction.
class PushWorld {
public:
    explicit PushWorld(PushConfig config = {});

    IntVec reset(std::uint64_t seed);
    /// Action of 3 integers in 0-100; DomainError otherwise.
    IntVec step(const IntVec& action);
    /// Effector xyz then object xyz, rounded into [lo, hi].
    IntVec observe() const;

    bool episode_done() const { return t_ >= config_.episode_steps; }
    int t() const { return t_; }
    bool last_contact() const { return last_contact_; }
    const Vec3& effector() const { return effector_; }
    const Vec3& object() const { return object_; }
    const Vec3& goal() const { return goal_; }
    const PushConfig& config() const { return config_; }
    double effector_object_distance() const;
    double object_goal_distance() const;

private:
    PushConfig config_;
    Vec3 effector_{};
    Vec3 object_{};
    Vec3 goal_{};
    int t_ = 0;
    bool last_contact_ = false;
};

// --- marker in cup --------------------------------------------------------------

inline constexpr std::size_t kMarkerLength = 50;

struct MarkerConfig {
    int bin_hi = 200;  // states are binned 0..bin_hi per dimension
    int hold_start = 15;  // steps spent at the start before moving
    int hold_end = 10;    // steps spent at the cup after arriving
    double min_distance = 40.0;
    double max_distance = 48.0;
    double kappa = 0.0;  // 0 selects 100 / (0.35 * workspace diagonal)
};

struct MarkerScene {
    IntVec start;
    IntVec cup;
    std::vector<IntVec> full;  // kMarkerLength states ending at the cup
    double kappa = 0.0;
    int bin_hi = 200;

    /// round(100 - kappa * distance(final, cup)).
    int reward(const IntVec& final_state) const;
    int min_reward() const;
};

MarkerScene make_marker_scene(std::uint64_t seed, const MarkerConfig& config = {});

struct MarkerDemo {
    int reward = 0;
    std::vector<IntVec> states;
};

/// Copies of the full trajectory that stop moving once `fraction` of the
/// straight-line distance to the cup is covered, then hold that state.
/// StructuralError unless the full trajectory has kMarkerLength states.
std::vector<MarkerDemo> marker_build_context(const MarkerScene& scene,
                                             const std::vector<double>& fractions = {0.2, 0.4, 0.6, 0.8});

}  // namespace gpm::env
