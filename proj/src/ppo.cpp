#include "swarmnav/ppo.hpp"

#include "swarmnav/error.hpp"
#include "swarmnav/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

namespace swarmnav {

namespace {
constexpr std::uint64_t kShuffleSalt = 0x5f0c2a9d3e61b487ULL;
constexpr std::uint64_t kInitSalt = 0x1d8e4e27c47d124fULL;
}  // namespace

void PpoConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("ppo.gamma", "must lie in (0, 1)");
    if (!(clip_eps > 0.0)) throw ConfigError("ppo.clip_eps", "must be > 0");
    if (epochs < 1) throw ConfigError("ppo.epochs", "must be >= 1");
    if (minibatch < 1) throw ConfigError("ppo.minibatch", "must be >= 1");
    if (rollout_episodes < 1) throw ConfigError("ppo.rollout_episodes", "must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("ppo.lr", "must be >= 0");
    if (!(value_loss_coef >= 0.0)) throw ConfigError("ppo.value_loss_coef", "must be >= 0");
    if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef", "must be >= 0");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("ppo.max_grad_norm", "must be >= 0");
    if (!(reward_scale > 0.0)) throw ConfigError("ppo.reward_scale", "must be > 0");
}

void EnvConfig::validate() const {
    reward.validate();
    if (!(sim.dt > 0.0)) throw ConfigError("sim.dt", "must be > 0");
    if (!(sim.v_max > 0.0)) throw ConfigError("sim.v_max", "must be > 0");
    if (sim.arrival_radius != reward.eps_arr) {
        throw ConfigError("sim.arrival_radius", "must equal reward.eps_arr");
    }
    if (max_steps < 1) throw ConfigError("env.max_steps", "must be >= 1");
    if (!(scaling.distance > 0.0)) throw ConfigError("network.d_norm", "must be > 0");
    if (!(scaling.r_max > 0.0)) throw ConfigError("network.r_max", "must be > 0");
}

void RolloutBuffer::append(RolloutBuffer&& other) {
    const std::size_t offset = transitions.size();
    for (auto& t : other.trajectories) {
        t.begin += offset;
        t.end += offset;
        trajectories.push_back(t);
    }
    transitions.insert(transitions.end(), std::make_move_iterator(other.transitions.begin()),
                       std::make_move_iterator(other.transitions.end()));
    episodes.insert(episodes.end(), other.episodes.begin(), other.episodes.end());
    returns.clear();
    advantages_raw.clear();
    advantages.clear();
}

double gaussian_log_prob(const Eigen::Vector2d& action, const Eigen::Vector2d& mean,
                         const Eigen::Ref<const Eigen::VectorXd>& log_std) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double lp = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double z = (action[k] - mean[k]) * std::exp(-log_std[k]);
        lp += -0.5 * z * z - log_std[k] - kHalfLog2Pi;
    }
    return lp;
}

double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std) {
    constexpr double kHalfLog2PiE = 1.41893853320467274178;
    return log_std.sum() + kHalfLog2PiE * double(log_std.size());
}

RolloutBuffer run_episode(const Network& policy, const Network* value, WorldState world,
                          const EnvConfig& env, Rng* rng, std::int64_t episode_id,
                          const EpisodeOptions& opts) {
    if (opts.mode == ActionMode::Sample && rng == nullptr) {
        throw ContractViolation("run_episode: sampling requires an rng");
    }
    if (opts.record_transitions && value == nullptr) {
        throw ContractViolation("run_episode: recording transitions requires a value network");
    }
    const std::size_t n = world.agents.size();
    const RewardConfig& rc = env.reward;

    std::vector<double> route(n), path(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        route[i] = (world.agents[i].destination - world.agents[i].position).norm();
    }
    std::vector<std::vector<Transition>> per_agent(n);
    std::vector<char> in_eps(n * n, 0);
    std::vector<Vec2> actions(n, Vec2::Zero());
    std::vector<Transition> pending(n);
    std::vector<std::size_t> active;
    active.reserve(n);

    EpisodeStats stats;
    stats.episode_id = episode_id;
    stats.agents = static_cast<int>(n);
    stats.min_pair_distance = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd log_std = policy.log_std();

    if (opts.on_world) opts.on_world(world);
    while (!episode_done(world, env.max_steps).done) {
        active.clear();
        for (std::size_t i = 0; i < n; ++i) {
            actions[i].setZero();
            if (!world.agents[i].arrived) active.push_back(i);
        }
        for (std::size_t i : active) {
            EgoObservation obs = observe(world, i);
            const Eigen::Vector2d mean = policy_forward(policy, obs, env.scaling);
            Eigen::Vector2d a = mean;
            if (opts.mode == ActionMode::Sample) {
                for (int k = 0; k < 2; ++k) a[k] += std::exp(log_std[k]) * rng->normal();
            }
            actions[i] = body_to_world(world.agents[i].heading, a);
            if (opts.record_transitions) {
                Transition& t = pending[i];
                t.action = a;
                t.log_prob = gaussian_log_prob(a, mean, log_std);
                t.value = value_forward(*value, obs, env.scaling);
                t.agent_id = static_cast<int>(i);
                t.episode_id = episode_id;
                t.observation = std::move(obs);
            }
        }

        WorldState next = step(world, actions, env.sim);
        // Collision terms use post-step positions among agents active at step start.
        WorldState probe = next;
        for (std::size_t i = 0; i < n; ++i) probe.agents[i].arrived = world.agents[i].arrived;

        for (std::size_t i : active) {
            const AgentState& before = world.agents[i];
            const AgentState& after = next.agents[i];
            const double arr =
                after.arrived ? arrival_reward((after.destination - after.position).norm(), rc) : 0.0;
            const double cav = collision_reward(i, probe, rc);
            const double tme = time_reward(route[i], rc, env.sim.dt, env.sim.v_max);
            const double acc = acceleration_reward(before.velocity, after.velocity, env.sim.dt);
            const StepReward r = combine(rc, arr, cav, tme, acc);
            stats.reward_sum += r.total;
            stats.abs_dv_sum += -acc;
            stats.agent_steps += 1;
            path[i] += (after.position - before.position).norm();
            if (opts.record_transitions) {
                Transition& t = pending[i];
                t.reward = r.total * opts.reward_scale;
                t.done = after.arrived;
                per_agent[i].push_back(std::move(t));
            }
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const std::size_t i = active[a], j = active[b];
                const double d = (next.agents[i].position - next.agents[j].position).norm();
                stats.min_pair_distance = std::min(stats.min_pair_distance, d);
                char& inside = in_eps[i * n + j];
                if (d <= rc.eps_cav) {
                    if (!inside) stats.collision_events += 1;
                    inside = 1;
                } else {
                    inside = 0;
                    if (d <= rc.delta_cav) stats.delta_zone_steps += 1;
                }
            }
        }
        world = std::move(next);
        if (opts.on_world) opts.on_world(world);
    }

    stats.steps = world.step_count;
    for (std::size_t i = 0; i < n; ++i) {
        if (world.agents[i].arrived) {
            stats.arrived += 1;
            // shortest path into the arrival disc is route - eps_arr long
            const double straight = route[i] - rc.eps_arr;
            if (straight > 0.0) {
                stats.path_ratio_sum += path[i] / straight;
                stats.path_ratio_count += 1;
            }
        }
    }

    RolloutBuffer out;
    out.episodes.push_back(stats);
    if (opts.record_transitions) {
        for (std::size_t i = 0; i < n; ++i) {
            if (per_agent[i].empty()) continue;
            Trajectory tr;
            tr.episode_id = episode_id;
            tr.agent_id = static_cast<int>(i);
            tr.begin = out.transitions.size();
            tr.truncated = !world.agents[i].arrived;
            if (tr.truncated) tr.bootstrap_value = value_forward(*value, observe(world, i), env.scaling);
            for (auto& t : per_agent[i]) out.transitions.push_back(std::move(t));
            tr.end = out.transitions.size();
            out.trajectories.push_back(tr);
        }
    }
    return out;
}

ScenarioSource random_scenarios(const ScenarioConfig& cfg) {
    return [cfg](Rng& rng, std::int64_t) { return generate_scenario(rng, cfg); };
}

RolloutBuffer collect_rollouts(const Network& policy, const Network& value,
                               const ScenarioSource& scenarios, const EnvConfig& env,
                               std::uint64_t seed, std::int64_t first_episode,
                               std::int64_t n_episodes, double reward_scale, int workers) {
    std::vector<RolloutBuffer> parts(static_cast<std::size_t>(std::max<std::int64_t>(n_episodes, 0)));
    EpisodeOptions opts;
    opts.reward_scale = reward_scale;

    auto run_one = [&](std::int64_t k) {
        const std::int64_t episode = first_episode + k;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(episode)));
        const Scenario sc = scenarios(rng, episode);
        parts[static_cast<std::size_t>(k)] =
            run_episode(policy, &value, sc.world(), env, &rng, episode, opts);
    };

    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::int64_t>(n_episodes, 1))));
    if (workers == 1) {
        for (std::int64_t k = 0; k < n_episodes; ++k) run_one(k);
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::int64_t k = w; k < n_episodes; k += workers) run_one(k);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    RolloutBuffer buffer;
    for (auto& p : parts) buffer.append(std::move(p));
    return buffer;
}

void compute_returns_and_advantages(RolloutBuffer& buffer, double gamma) {
    const std::size_t N = buffer.transitions.size();
    if (N == 0) throw ContractViolation("compute_returns_and_advantages: empty buffer");
    buffer.returns.assign(N, 0.0);
    buffer.advantages_raw.assign(N, 0.0);
    for (const auto& tr : buffer.trajectories) {
        double g = tr.truncated ? tr.bootstrap_value : 0.0;
        for (std::size_t t = tr.end; t-- > tr.begin;) {
            g = buffer.transitions[t].reward + gamma * g;
            buffer.returns[t] = g;
        }
    }
    double mean = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
        buffer.advantages_raw[t] = buffer.returns[t] - buffer.transitions[t].value;
        mean += buffer.advantages_raw[t];
    }
    mean /= double(N);
    double var = 0.0;
    for (double a : buffer.advantages_raw) var += (a - mean) * (a - mean);
    var /= double(N);
    const double sd = std::sqrt(var);
    buffer.advantages.resize(N);
    for (std::size_t t = 0; t < N; ++t) {
        const double centered = buffer.advantages_raw[t] - mean;
        buffer.advantages[t] = (N > 1 && sd > 1e-12) ? centered / sd : centered;
    }
}

SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip_eps) noexcept {
    const double unclipped = ratio * advantage;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    if (unclipped <= clipped) return {unclipped, advantage, false};
    return {clipped, 0.0, true};
}

LossResult ppo_loss(const RolloutBuffer& buffer, std::span<const std::size_t> batch,
                    const Network& policy, const Network& value, const PpoConfig& cfg,
                    const InputScaling& scaling) {
    if (batch.empty()) throw ContractViolation("ppo_loss: empty batch");
    if (buffer.returns.size() != buffer.transitions.size() ||
        buffer.advantages.size() != buffer.transitions.size()) {
        throw ContractViolation("ppo_loss: returns/advantages not computed");
    }
    LossResult res;
    res.policy_grad = Eigen::VectorXd::Zero(policy.layout().size);
    res.value_grad = Eigen::VectorXd::Zero(value.layout().size);
    const double inv_b = 1.0 / double(batch.size());
    const Eigen::VectorXd log_std = policy.log_std();
    const Eigen::Vector2d inv_var = (-2.0 * log_std.array()).exp();
    const Eigen::Index ls_at = policy.layout().log_std;

    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    std::vector<NetworkInput> p_in, v_in;
    p_in.reserve(batch.size());
    v_in.reserve(batch.size());
    for (std::size_t idx : batch) {
        if (idx >= buffer.transitions.size()) throw ContractViolation("ppo_loss: index out of range");
        const auto& obs = buffer.transitions[idx].observation;
        p_in.push_back(make_input(policy.dims(), obs, scaling));
        v_in.push_back(make_input(value.dims(), obs, scaling));
    }
    std::vector<const NetworkInput*> p_ptr, v_ptr;
    for (Eigen::Index b = 0; b < B; ++b) {
        p_ptr.push_back(&p_in[b]);
        v_ptr.push_back(&v_in[b]);
    }
    BatchTape ptape, vtape;
    const Eigen::MatrixXd means = forward_batch(policy, p_ptr, &ptape);
    const Eigen::MatrixXd values = forward_batch(value, v_ptr, &vtape);

    Eigen::MatrixXd g_mean = Eigen::MatrixXd::Zero(2, B);
    Eigen::MatrixXd g_v(1, B);
    std::size_t n_clipped = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
        const std::size_t idx = batch[b];
        const Transition& tr = buffer.transitions[idx];
        const double adv = buffer.advantages[idx];

        const Eigen::Vector2d mean = means.col(b);
        const double logp = gaussian_log_prob(tr.action, mean, log_std);
        const double ratio = std::exp(logp - tr.log_prob);
        if (!std::isfinite(ratio)) {
            throw NumericError("ppo_loss: non-finite probability ratio for episode " +
                               std::to_string(tr.episode_id) + " agent " + std::to_string(tr.agent_id) +
                               " (log_prob " + std::to_string(logp) + " vs stored " +
                               std::to_string(tr.log_prob) + "; stale buffer?)");
        }
        res.max_abs_ratio_dev = std::max(res.max_abs_ratio_dev, std::abs(ratio - 1.0));
        const SurrogateTerm s = clipped_surrogate(ratio, adv, cfg.clip_eps);
        res.policy_loss -= s.objective * inv_b;
        if (std::abs(ratio - 1.0) > cfg.clip_eps) ++n_clipped;

        const double g_logp = -s.d_ratio * ratio * inv_b;
        if (g_logp != 0.0) {
            const Eigen::Vector2d diff = tr.action - mean;
            g_mean.col(b) = g_logp * diff.cwiseProduct(inv_var);
            for (int k = 0; k < 2; ++k) {
                res.policy_grad[ls_at + k] += g_logp * (diff[k] * diff[k] * inv_var[k] - 1.0);
            }
        }

        const double err = values(0, b) - buffer.returns[idx];
        res.value_loss += err * err * inv_b;
        g_v(0, b) = cfg.value_loss_coef * 2.0 * err * inv_b;
    }
    backward_batch(policy, ptape, g_mean, res.policy_grad);
    backward_batch(value, vtape, g_v, res.value_grad);
    res.entropy = gaussian_entropy(log_std);
    for (int k = 0; k < 2; ++k) res.policy_grad[ls_at + k] -= cfg.entropy_coef;
    res.clip_fraction = double(n_clipped) * inv_b;
    res.loss = res.policy_loss + cfg.value_loss_coef * res.value_loss - cfg.entropy_coef * res.entropy;
    return res;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    ppo.validate();
    env.validate();
    scenario.validate();
    if (policy_dims.outputs != 2 || !policy_dims.log_std) {
        throw ConfigError("network", "policy must have 2 outputs and a log_std block");
    }
    if (value_dims.outputs != 1 || value_dims.log_std) {
        throw ConfigError("network", "value network must have a single output");
    }
    if (total_episodes < 1) throw ConfigError("train.episodes", "must be >= 1");
    if (workers < 1) throw ConfigError("train.workers", "must be >= 1");
}

TrainState init_train_state(const TrainConfig& cfg) {
    Network policy(cfg.policy_dims);
    Network value(cfg.value_dims);
    Rng rng(derive_seed(cfg.seed, kInitSalt));
    initialize(policy, rng, cfg.init);
    InitOptions value_init = cfg.init;
    value_init.forward_bias = 0.0;
    initialize(value, rng, value_init);
    const auto np = policy.params().size();
    const auto nv = value.params().size();
    return TrainState{std::move(policy), std::move(value), AdamState(np), AdamState(nv), 0, 0};
}

IterationMetrics train_iteration(TrainState& state, const TrainConfig& cfg) {
    const TrainState backup = state;
    try {
        const std::int64_t n_episodes =
            std::min<std::int64_t>(cfg.ppo.rollout_episodes, cfg.total_episodes - state.episodes_seen);
        if (n_episodes < 1) throw ContractViolation("train_iteration: episode budget exhausted");

        RolloutBuffer buffer =
            collect_rollouts(state.policy, state.value, random_scenarios(cfg.scenario), cfg.env, cfg.seed,
                             state.episodes_seen, n_episodes, cfg.ppo.reward_scale, cfg.workers);
        compute_returns_and_advantages(buffer, cfg.ppo.gamma);

        const std::size_t N = buffer.transitions.size();
        std::vector<std::size_t> order(N);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(cfg.seed ^ kShuffleSalt, static_cast<std::uint64_t>(state.iteration)));
        const AdamConfig adam{cfg.ppo.lr};

        IterationMetrics m;
        std::size_t n_batches = 0;
        for (int epoch = 0; epoch < cfg.ppo.epochs; ++epoch) {
            for (std::size_t k = N; k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);
            for (std::size_t at = 0; at < N; at += static_cast<std::size_t>(cfg.ppo.minibatch)) {
                const std::size_t len = std::min<std::size_t>(cfg.ppo.minibatch, N - at);
                LossResult loss = ppo_loss(buffer, std::span(order).subspan(at, len), state.policy,
                                           state.value, cfg.ppo, cfg.env.scaling);
                clip_grad_norm(loss.policy_grad, cfg.ppo.max_grad_norm);
                clip_grad_norm(loss.value_grad, cfg.ppo.max_grad_norm);
                adam_update(state.policy.params(), loss.policy_grad, state.policy_adam, adam);
                adam_update(state.value.params(), loss.value_grad, state.value_adam, adam);
                m.policy_loss += loss.policy_loss;
                m.value_loss += loss.value_loss;
                m.clip_fraction += loss.clip_fraction;
                ++n_batches;
            }
        }
        if (!state.policy.params().allFinite() || !state.value.params().allFinite()) {
            throw NumericError("train_iteration: parameters became non-finite");
        }
        m.policy_loss /= double(n_batches);
        m.value_loss /= double(n_batches);
        m.clip_fraction /= double(n_batches);

        std::int64_t agents = 0, arrived = 0, agent_steps = 0;
        double reward = 0.0, dv = 0.0;
        for (const auto& e : buffer.episodes) {
            agents += e.agents;
            arrived += e.arrived;
            agent_steps += e.agent_steps;
            reward += e.reward_sum;
            dv += e.abs_dv_sum;
            m.collision_events += e.collision_events;
            m.collision_episodes += e.collision_events > 0 ? 1 : 0;
        }
        state.iteration += 1;
        state.episodes_seen += n_episodes;
        m.iteration = state.iteration;
        m.episodes_seen = state.episodes_seen;
        m.episodes = n_episodes;
        m.transitions = static_cast<std::int64_t>(N);
        m.mean_reward = agents > 0 ? reward / double(agents) : 0.0;
        m.arrival_rate = agents > 0 ? double(arrived) / double(agents) : 0.0;
        m.mean_abs_dv = agent_steps > 0 ? dv / double(agent_steps) : 0.0;
        return m;
    } catch (const NumericError&) {
        state = backup;
        throw;
    }
}

std::vector<IterationMetrics> train(TrainState& state, const TrainConfig& cfg,
                                    const std::function<void(const TrainState&, const IterationMetrics&)>&
                                        on_iteration) {
    cfg.validate();
    std::vector<IterationMetrics> log;
    while (state.episodes_seen < cfg.total_episodes) {
        log.push_back(train_iteration(state, cfg));
        if (on_iteration) on_iteration(state, log.back());
    }
    return log;
}

}  // namespace swarmnav
