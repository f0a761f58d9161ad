#pragma once

// Evaluation of trained policies: commanded-angle maps, ground tracks,
// aggregate metrics and the agent-count sweep.

#include "swarmnav/network.hpp"
#include "swarmnav/ppo.hpp"
#include "swarmnav/scenario.hpp"
#include "swarmnav/sim.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace swarmnav {

// ---------------------------------------------------------------------------
// Commanded-angle map

struct FixedAgent {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;
};

struct HeatmapSpec {
    std::vector<FixedAgent> fixed_agents;
    Rect bounds{};
    double resolution = 0.5;     // m per cell
    double ego_heading = 0.0;    // rad
    double destination_distance = 1e4;  // m ahead of the ego, keeps psi_D ~ 0
    double speed = 2.0;          // m/s assigned to every agent's velocity

    /// Throws ContractViolation on a degenerate grid or a fixed agent outside it.
    void validate() const;
};

/// Named scenes: "head_on" (one agent at the origin flying toward -x),
/// "four" (agents at (-20,-20) heading +x, (10,10) and (20,20) heading -x), "empty".
HeatmapSpec heatmap_preset(const std::string& name);

struct Heatmap {
    Eigen::MatrixXd delta_deg;  // rows follow x (north), columns follow y (east)
    std::vector<double> xs;     // cell centers, m
    std::vector<double> ys;
    HeatmapSpec spec;
};

/// Deterministic policy output at every cell, as the commanded heading change
/// in degrees, wrapped to (-180, 180].
Heatmap commanded_angle_map(const Network& policy, const HeatmapSpec& spec, const InputScaling& scaling);

/// CSV matrix (header row of y centers, first column x centers) plus JSON sidecar.
void write_heatmap(const Heatmap& map, const std::string& csv_path, const std::string& json_path);

// ---------------------------------------------------------------------------
// Episodes and metrics

struct EvalMetrics {
    std::int64_t episodes = 0;
    std::int64_t agents = 0;
    std::int64_t arrived = 0;
    double arrival_rate = 0.0;
    std::int64_t collision_events = 0;
    std::int64_t collision_free_episodes = 0;
    std::int64_t delta_zone_steps = 0;
    double mean_path_ratio = 0.0;  // arrived agents only
    double mean_abs_dv = 0.0;      // m/s per agent-step
    double mean_reward = 0.0;      // per agent-episode

    nlohmann::json to_json() const;
};

EvalMetrics summarize(std::span<const EpisodeStats> episodes);

/// One episode with the policy mean (deterministic) or sampled actions. The
/// track CSV is written when `tracks` is non-null.
EpisodeStats run_ground_tracks(const Network& policy, const Scenario& scenario, const EnvConfig& env,
                               bool deterministic, std::uint64_t seed, std::int64_t episode_id = 0,
                               std::ostream* tracks = nullptr);

/// Episode `e` of the evaluation stream: scenario from Rng(derive_seed(seed, e)),
/// action noise from derive_seed(derive_seed(seed, e), 1).
EpisodeStats evaluate_episode(const Network& policy, const ScenarioConfig& scenarios, const EnvConfig& env,
                              bool deterministic, std::uint64_t seed, std::int64_t e,
                              std::ostream* tracks = nullptr);

/// Episodes [0, n) of the scenario stream (scenario and noise for episode e
/// come from derive_seed(seed, e)).
std::vector<EpisodeStats> evaluate_policy(const Network& policy, const ScenarioConfig& scenarios,
                                          const EnvConfig& env, std::int64_t n_episodes,
                                          bool deterministic, std::uint64_t seed, int workers = 1);

// ---------------------------------------------------------------------------
// Agent-count sweep

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Wall time of one policy evaluation for an ego that sees n_agents - 1
/// neighbors, in seconds. Median over `repeats` timed blocks.
double policy_step_seconds(const Network& policy, int n_agents, const InputScaling& scaling,
                           int repeats = 15, std::uint64_t seed = 1);

struct SweepPoint {
    int agents = 0;
    double arena_scale = 1.0;
    EvalMetrics metrics;
    double step_seconds = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    LinearFit timing;  // step_seconds against agent count, arena scale 1 points
};

/// Runs `episodes` deterministic episodes at every (count, scale) pair. The
/// arena and the step budget are both multiplied by the scale.
SweepResult scalability_sweep(const Network& policy, std::span<const int> counts,
                              std::span<const double> arena_scales, std::int64_t episodes,
                              const EnvConfig& env, const ScenarioConfig& base, std::uint64_t seed,
                              int workers = 1);

}  // namespace swarmnav
