#pragma once

#include "swarmnav/network.hpp"
#include "swarmnav/rewards.hpp"
#include "swarmnav/scenario.hpp"
#include "swarmnav/sim.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace swarmnav {

struct PpoConfig {
    double gamma = 0.99;
    double clip_eps = 0.2;
    int epochs = 10;
    int minibatch = 256;
    int rollout_episodes = 16;
    double lr = 3e-4;
    double value_loss_coef = 0.5;
    double entropy_coef = 0.0;
    double max_grad_norm = 0.5;
    /// Multiplies rewards before they enter returns and the critic. Metrics stay
    /// in raw reward units.
    double reward_scale = 0.01;

    void validate() const;
};

/// Everything the environment needs besides the scenario.
struct EnvConfig {
    SimConfig sim;
    RewardConfig reward;
    std::int64_t max_steps = 600;
    InputScaling scaling;

    void validate() const;
};

struct Transition {
    EgoObservation observation;
    Vec2 action = Vec2::Zero();  // sampled body-frame command, before speed clipping
    double log_prob = 0.0;
    double reward = 0.0;  // scaled by PpoConfig::reward_scale when collected for training
    double value = 0.0;
    bool done = false;    // agent arrived on this step
    int agent_id = 0;
    std::int64_t episode_id = 0;
};

/// One agent's contiguous run of transitions inside a buffer.
struct Trajectory {
    std::int64_t episode_id = 0;
    int agent_id = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    bool truncated = false;
    double bootstrap_value = 0.0;  // critic value of the final observation when truncated
};

/// Per-episode outcome, in raw reward units.
struct EpisodeStats {
    std::int64_t episode_id = 0;
    int agents = 0;
    int arrived = 0;
    std::int64_t steps = 0;
    int collision_events = 0;       // pair entries into the eps_cav zone
    std::int64_t delta_zone_steps = 0;  // pair-steps with eps_cav < d <= delta_cav
    double reward_sum = 0.0;        // summed over agents and steps
    double abs_dv_sum = 0.0;
    std::int64_t agent_steps = 0;
    double path_ratio_sum = 0.0;    // arrived agents: path length / (route - eps_arr)
    int path_ratio_count = 0;
    double min_pair_distance = 0.0;
};

struct RolloutBuffer {
    std::vector<Transition> transitions;
    std::vector<Trajectory> trajectories;
    std::vector<EpisodeStats> episodes;
    std::vector<double> returns;
    std::vector<double> advantages_raw;
    std::vector<double> advantages;

    void append(RolloutBuffer&& other);
};

double gaussian_log_prob(const Eigen::Vector2d& action, const Eigen::Vector2d& mean,
                         const Eigen::Ref<const Eigen::VectorXd>& log_std);
double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std);

/// How actions are chosen while simulating.
enum class ActionMode { Sample, Mean };

/// Observer for every simulated world state (including the initial one).
using WorldObserver = std::function<void(const WorldState&)>;

struct EpisodeOptions {
    ActionMode mode = ActionMode::Sample;
    bool record_transitions = true;
    double reward_scale = 1.0;
    WorldObserver on_world;
};

/// Simulates one episode to completion. `value` may be null when transitions
/// are not recorded. `rng` is required in Sample mode.
RolloutBuffer run_episode(const Network& policy, const Network* value, WorldState world,
                          const EnvConfig& env, Rng* rng, std::int64_t episode_id,
                          const EpisodeOptions& opts);

using ScenarioSource = std::function<Scenario(Rng&, std::int64_t episode_id)>;

ScenarioSource random_scenarios(const ScenarioConfig& cfg);

/// Runs episodes [first_episode, first_episode + n_episodes). Episode e draws
/// its scenario and action noise from Rng(derive_seed(seed, e)), so the buffer
/// does not depend on the worker count. Results are merged in episode order.
RolloutBuffer collect_rollouts(const Network& policy, const Network& value,
                               const ScenarioSource& scenarios, const EnvConfig& env,
                               std::uint64_t seed, std::int64_t first_episode,
                               std::int64_t n_episodes, double reward_scale = 1.0,
                               int workers = 1);

/// Discounted returns per trajectory (bootstrapped when truncated), raw
/// advantages G - V, and advantages normalized over the whole buffer.
void compute_returns_and_advantages(RolloutBuffer& buffer, double gamma);

/// Per-sample clipped objective min(r*A, clip(r, 1-eps, 1+eps)*A) and its
/// derivative with respect to r.
struct SurrogateTerm {
    double objective = 0.0;
    double d_ratio = 0.0;
    bool clipped = false;
};
SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip_eps) noexcept;

struct LossResult {
    double loss = 0.0;
    double policy_loss = 0.0;  // -mean clipped objective
    double value_loss = 0.0;   // mean squared error
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double max_abs_ratio_dev = 0.0;  // max |r - 1| over the batch
    Eigen::VectorXd policy_grad;
    Eigen::VectorXd value_grad;
};

/// Loss of a minibatch (indices into the buffer) and its gradients w.r.t. both
/// networks. Throws NumericError on a non-finite ratio.
LossResult ppo_loss(const RolloutBuffer& buffer, std::span<const std::size_t> batch,
                    const Network& policy, const Network& value, const PpoConfig& cfg,
                    const InputScaling& scaling);

// ---------------------------------------------------------------------------

struct TrainConfig {
    PpoConfig ppo;
    EnvConfig env;
    ScenarioConfig scenario;
    NetworkDims policy_dims = NetworkDims::policy();
    NetworkDims value_dims = NetworkDims::value();
    InitOptions init{.forward_bias = 4.0};
    std::uint64_t seed = 0;
    std::int64_t total_episodes = 20000;
    int workers = 1;

    void validate() const;
};

struct TrainState {
    Network policy;
    Network value;
    AdamState policy_adam;
    AdamState value_adam;
    std::int64_t iteration = 0;
    std::int64_t episodes_seen = 0;
};

struct IterationMetrics {
    std::int64_t iteration = 0;
    std::int64_t episodes_seen = 0;
    double mean_reward = 0.0;   // per agent-episode, raw units
    double arrival_rate = 0.0;  // arrived agents / agents
    std::int64_t collision_events = 0;
    double mean_abs_dv = 0.0;   // per agent-step, m/s
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clip_fraction = 0.0;
    // not part of the CSV
    std::int64_t episodes = 0;
    std::int64_t collision_episodes = 0;
    std::int64_t transitions = 0;
};

TrainState init_train_state(const TrainConfig& cfg);

/// One collect / advantage / update cycle. On a numeric failure the state is
/// restored to its value at entry and NumericError is rethrown.
IterationMetrics train_iteration(TrainState& state, const TrainConfig& cfg);

/// Calls train_iteration until cfg.total_episodes have been seen, invoking
/// `on_iteration` after each one. Returns every iteration's metrics.
std::vector<IterationMetrics> train(TrainState& state, const TrainConfig& cfg,
                                    const std::function<void(const TrainState&, const IterationMetrics&)>&
                                        on_iteration = {});

}  // namespace swarmnav
