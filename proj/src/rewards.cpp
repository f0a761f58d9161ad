#include "swarmnav/rewards.hpp"

#include "swarmnav/error.hpp"

#include <cmath>

namespace swarmnav {

void RewardConfig::validate() const {
    if (!(eps_arr > 0.0)) throw ConfigError("reward.eps_arr", "must be > 0");
    if (!(eps_cav > 0.0)) throw ConfigError("reward.eps_cav", "must be > 0");
    if (!(delta_cav > eps_cav)) throw ConfigError("reward.delta_cav", "must exceed eps_cav");
    if (!(arrival > 0.0)) throw ConfigError("reward.arrival", "must be > 0");
    if (!(collision < 0.0)) throw ConfigError("reward.collision", "must be < 0");
    if (!(time_total <= 0.0)) throw ConfigError("reward.time_total", "must be <= 0");
    if (w_arr < 0.0 || w_cav < 0.0 || w_tme < 0.0 || w_acc < 0.0) {
        throw ConfigError("reward.w_*", "weights must be non-negative");
    }
}

double arrival_reward(double dist_to_dest, const RewardConfig& cfg) noexcept {
    return dist_to_dest <= cfg.eps_arr ? cfg.arrival : 0.0;
}

double pair_collision_reward(double distance, const RewardConfig& cfg) noexcept {
    if (distance <= cfg.eps_cav) return cfg.collision;
    if (distance <= cfg.delta_cav) {
        const double f = (cfg.delta_cav - distance) / (cfg.delta_cav - cfg.eps_cav);
        return cfg.collision * f;
    }
    return 0.0;
}

double collision_reward(std::size_t ego_index, const WorldState& world, const RewardConfig& cfg) {
    if (ego_index >= world.agents.size()) {
        throw ContractViolation("collision_reward: ego index out of range");
    }
    const AgentState& ego = world.agents[ego_index];
    double sum = 0.0;
    for (std::size_t j = 0; j < world.agents.size(); ++j) {
        if (j == ego_index || world.agents[j].arrived) continue;
        sum += pair_collision_reward((world.agents[j].position - ego.position).norm(), cfg);
    }
    return sum;
}

double time_reward(double start_to_dest_dist, const RewardConfig& cfg, double dt, double v_max) {
    if (!(start_to_dest_dist > 0.0)) {
        throw ContractViolation("time_reward: start and destination coincide");
    }
    return cfg.time_total * (dt * v_max / start_to_dest_dist);
}

double acceleration_reward(const Vec2& prev_velocity, const Vec2& new_velocity, double dt) {
    if (!(dt > 0.0)) throw ContractViolation("acceleration_reward: dt must be positive");
    return -(new_velocity - prev_velocity).norm();
}

StepReward combine(const RewardConfig& cfg, double arrival, double collision, double time,
                   double acceleration) noexcept {
    StepReward r{arrival, collision, time, acceleration, 0.0};
    r.total = cfg.w_arr * arrival + cfg.w_cav * collision + cfg.w_tme * time +
              cfg.w_acc * acceleration;
    return r;
}

}  // namespace swarmnav
