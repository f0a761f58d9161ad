#pragma once

#include "swarmnav/sim.hpp"

namespace swarmnav {

struct RewardConfig {
    double eps_arr = 2.0;    // m
    double eps_cav = 3.0;    // m
    double delta_cav = 10.0; // m
    double arrival = 100.0;      // paid once, on the step of first arrival
    double collision = -200.0;   // per neighbor inside eps_cav
    double time_total = -10.0;   // accumulated over a straight v_max flight
    double w_arr = 1.0;
    double w_cav = 1.0;
    double w_tme = 1.0;
    double w_acc = 1.0;

    /// Throws ConfigError naming the first broken invariant.
    void validate() const;
};

struct StepReward {
    double arrival = 0.0;
    double collision = 0.0;
    double time = 0.0;
    double acceleration = 0.0;
    double total = 0.0;
};

double arrival_reward(double dist_to_dest, const RewardConfig& cfg) noexcept;

/// Penalty for one neighbor at distance d: full inside eps_cav, linear ramp to
/// zero at delta_cav, zero beyond.
double pair_collision_reward(double distance, const RewardConfig& cfg) noexcept;

/// Sum of pair penalties over every other non-arrived agent.
double collision_reward(std::size_t ego_index, const WorldState& world, const RewardConfig& cfg);

/// Per-step time penalty, normalized so a straight flight at v_max sums to
/// cfg.time_total regardless of route length.
double time_reward(double start_to_dest_dist, const RewardConfig& cfg, double dt, double v_max);

/// -|v_new - v_prev|, the one-step discretization of -integral |a| dt.
double acceleration_reward(const Vec2& prev_velocity, const Vec2& new_velocity, double dt);

StepReward combine(const RewardConfig& cfg, double arrival, double collision, double time,
                   double acceleration) noexcept;

}  // namespace swarmnav
