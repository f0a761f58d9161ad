#include "oracles.hpp"

#include "swarmnav/error.hpp"
#include "swarmnav/ppo.hpp"
#include "swarmnav/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace swarmnav;
using swarmnav::testing::finite_difference_gradient;
using swarmnav::testing::max_relative_error;

namespace {

NetworkDims tiny(bool policy, int hidden = 4) {
    NetworkDims d = policy ? NetworkDims::policy(EncoderKind::Lstm, hidden)
                           : NetworkDims::value(EncoderKind::Lstm, hidden);
    d.layer1 = 12;
    d.layer2 = 10;
    return d;
}

struct Nets {
    Network policy{tiny(true)};
    Network value{tiny(false)};
};

Nets make_nets(std::uint64_t seed, double forward_bias = 4.0) {
    Nets n;
    Rng rng(seed);
    InitOptions init;
    init.forward_bias = forward_bias;
    initialize(n.policy, rng, init);
    init.forward_bias = 0.0;
    initialize(n.value, rng, init);
    return n;
}

RolloutBuffer small_buffer(const Nets& n, std::uint64_t seed, int max_agents = 3,
                           std::int64_t max_steps = 40) {
    ScenarioConfig sc;
    sc.max_agents = max_agents;
    EnvConfig env;
    env.max_steps = max_steps;
    return collect_rollouts(n.policy, n.value, random_scenarios(sc), env, seed, 0, 4, 0.01);
}

Transition tr(double reward, double value, bool done = false) {
    Transition t;
    t.reward = reward;
    t.value = value;
    t.done = done;
    return t;
}

void push_trajectory(RolloutBuffer& b, std::vector<Transition> ts, bool truncated, double boot,
                     int agent) {
    Trajectory tj;
    tj.agent_id = agent;
    tj.begin = b.transitions.size();
    for (auto& t : ts) {
        t.agent_id = agent;
        b.transitions.push_back(t);
    }
    tj.end = b.transitions.size();
    tj.truncated = truncated;
    tj.bootstrap_value = boot;
    b.trajectories.push_back(tj);
}

}  // namespace

TEST(Returns, HandGeometricSum) {
    RolloutBuffer b;
    push_trajectory(b, {tr(1, 0), tr(1, 0), tr(1, 0, true)}, false, 0.0, 0);
    compute_returns_and_advantages(b, 0.5);
    EXPECT_DOUBLE_EQ(b.returns[0], 1.75);
    EXPECT_DOUBLE_EQ(b.returns[1], 1.5);
    EXPECT_DOUBLE_EQ(b.returns[2], 1.0);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(b.advantages_raw[k], b.returns[k]);
}

TEST(Returns, SingleStepAndPerfectCritic) {
    RolloutBuffer b;
    push_trajectory(b, {tr(-3.5, 0, true)}, false, 0.0, 0);
    compute_returns_and_advantages(b, 0.9);
    EXPECT_EQ(b.returns[0], -3.5);

    RolloutBuffer p;
    push_trajectory(p, {tr(1, 1.75), tr(1, 1.5), tr(1, 1.0, true)}, false, 0.0, 0);
    compute_returns_and_advantages(p, 0.5);
    for (double a : p.advantages_raw) EXPECT_EQ(a, 0.0);
}

TEST(Returns, TruncationBootstraps) {
    RolloutBuffer b;
    push_trajectory(b, {tr(1, 0), tr(2, 0)}, true, 10.0, 0);
    compute_returns_and_advantages(b, 0.5);
    EXPECT_DOUBLE_EQ(b.returns[1], 2.0 + 0.5 * 10.0);
    EXPECT_DOUBLE_EQ(b.returns[0], 1.0 + 0.5 * 7.0);
}

TEST(Returns, EmptyBufferRejected) {
    RolloutBuffer b;
    EXPECT_THROW(compute_returns_and_advantages(b, 0.99), ContractViolation);
}

TEST(Returns, RecursionNormalizationAndPermutationInvariance) {
    const Nets n = make_nets(51);
    RolloutBuffer b = small_buffer(n, 52);
    ASSERT_GT(b.trajectories.size(), 2u);
    compute_returns_and_advantages(b, 0.97);
    for (const auto& tj : b.trajectories) {
        for (std::size_t t = tj.begin; t + 1 < tj.end; ++t) {
            EXPECT_EQ(b.returns[t], b.transitions[t].reward + 0.97 * b.returns[t + 1]);
        }
    }
    const double N = double(b.advantages.size());
    const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / N;
    double var = 0.0;
    for (double a : b.advantages) var += (a - mean) * (a - mean);
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(var / N, 1.0, 1e-6);

    // Rebuild the buffer with trajectories in reverse order.
    RolloutBuffer r;
    std::vector<double> expected;
    for (auto it = b.trajectories.rbegin(); it != b.trajectories.rend(); ++it) {
        std::vector<Transition> ts(b.transitions.begin() + it->begin, b.transitions.begin() + it->end);
        push_trajectory(r, ts, it->truncated, it->bootstrap_value, it->agent_id);
        expected.insert(expected.end(), b.returns.begin() + it->begin, b.returns.begin() + it->end);
    }
    compute_returns_and_advantages(r, 0.97);
    EXPECT_EQ(r.returns, expected);
}

TEST(ClippedSurrogate, Branches) {
    const auto a = clipped_surrogate(0.5, 1.0, 0.2);
    EXPECT_DOUBLE_EQ(a.objective, 0.5);
    EXPECT_FALSE(a.clipped);
    const auto b = clipped_surrogate(1.4, 1.0, 0.2);
    EXPECT_DOUBLE_EQ(b.objective, 1.2);
    EXPECT_EQ(b.d_ratio, 0.0);
    EXPECT_TRUE(b.clipped);
    const auto c = clipped_surrogate(0.5, -1.0, 0.2);
    EXPECT_DOUBLE_EQ(c.objective, -0.8);
    EXPECT_EQ(c.d_ratio, 0.0);
    Rng rng(53);
    for (int k = 0; k < 10000; ++k) {
        const double r = rng.uniform(0.0, 3.0), adv = rng.uniform(-2.0, 2.0);
        const auto s = clipped_surrogate(r, adv, 0.2);
        EXPECT_LE(s.objective, r * adv);
        EXPECT_LE(s.objective, std::clamp(r, 0.8, 1.2) * adv);
    }
}

TEST(GaussianPolicy, LogProbAndEntropy) {
    const Eigen::Vector2d mean(0.3, -0.1);
    Eigen::VectorXd ls(2);
    ls << std::log(0.5), std::log(2.0);
    const Eigen::Vector2d a(0.8, 1.9);
    const double expected = -0.5 * (1.0 + 1.0) - std::log(0.5) - std::log(2.0) - std::log(2 * M_PI);
    EXPECT_NEAR(gaussian_log_prob(a, mean, ls), expected, 1e-14);
    EXPECT_NEAR(gaussian_entropy(ls), std::log(0.5) + std::log(2.0) + 1.0 + std::log(2 * M_PI), 1e-14);
}

TEST(PpoLoss, RatioIdentityAtCollectionParameters) {
    const Nets n = make_nets(54);
    RolloutBuffer b = small_buffer(n, 55);
    compute_returns_and_advantages(b, 0.99);
    std::vector<std::size_t> all(b.transitions.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    PpoConfig cfg;
    const LossResult res = ppo_loss(b, all, n.policy, n.value, cfg, InputScaling{});
    EXPECT_LE(res.max_abs_ratio_dev, 1e-12);
    EXPECT_EQ(res.clip_fraction, 0.0);
    double mean_adv = 0.0;
    for (double a : b.advantages) mean_adv += a;
    mean_adv /= double(b.advantages.size());
    EXPECT_NEAR(res.policy_loss, -mean_adv, 1e-12);
}

TEST(PpoLoss, GradientsMatchFiniteDifferences) {
    Nets n = make_nets(56);
    RolloutBuffer b = small_buffer(n, 57, 3, 12);
    compute_returns_and_advantages(b, 0.95);
    // Move away from the collection point so ratios differ from one.
    Rng rng(58);
    for (Eigen::Index k = 0; k < n.policy.params().size(); ++k) n.policy.params()[k] += rng.uniform(-0.05, 0.05);
    std::vector<std::size_t> batch;
    for (std::size_t k = 0; k < b.transitions.size(); k += 3) batch.push_back(k);
    PpoConfig cfg;
    cfg.clip_eps = 100.0;  // smooth region only; clipping has kinks
    cfg.entropy_coef = 0.03;
    const LossResult res = ppo_loss(b, batch, n.policy, n.value, cfg, InputScaling{});
    EXPECT_GT(res.max_abs_ratio_dev, 1e-3);

    const Network value = n.value;
    const auto fd_policy = finite_difference_gradient(n.policy, [&](const Network& p) {
        return ppo_loss(b, batch, p, value, cfg, InputScaling{}).loss;
    });
    EXPECT_LT(max_relative_error(res.policy_grad, fd_policy), 1e-5);

    const Network policy = n.policy;
    const auto fd_value = finite_difference_gradient(n.value, [&](const Network& v) {
        return ppo_loss(b, batch, policy, v, cfg, InputScaling{}).loss;
    });
    EXPECT_LT(max_relative_error(res.value_grad, fd_value), 1e-5);
}

TEST(PpoLoss, ClippedSamplesCarryNoPolicyGradient) {
    Nets n = make_nets(59);
    RolloutBuffer b = small_buffer(n, 60, 1, 10);
    compute_returns_and_advantages(b, 0.95);
    n.policy.log_std().array() -= 2.0;
    PpoConfig cfg;
    int saturated = 0;
    for (std::size_t idx = 0; idx < b.transitions.size(); ++idx) {
        const Transition& t = b.transitions[idx];
        const Eigen::Vector2d mean = policy_forward(n.policy, t.observation, InputScaling{});
        const double ratio = std::exp(gaussian_log_prob(t.action, mean, n.policy.log_std()) - t.log_prob);
        const std::size_t one[] = {idx};
        const LossResult res = ppo_loss(b, one, n.policy, n.value, cfg, InputScaling{});
        EXPECT_NEAR(res.max_abs_ratio_dev, std::abs(ratio - 1.0), 1e-9 * std::max(1.0, ratio));
        if (clipped_surrogate(ratio, b.advantages[idx], cfg.clip_eps).clipped) {
            ++saturated;
            EXPECT_EQ(res.policy_grad.squaredNorm(), 0.0) << idx;
        } else {
            EXPECT_GT(res.policy_grad.squaredNorm(), 0.0) << idx;
        }
    }
    EXPECT_GT(saturated, 0);
}

TEST(PpoLoss, NonFiniteRatioReported) {
    Nets n = make_nets(61);
    RolloutBuffer b = small_buffer(n, 62, 1, 5);
    compute_returns_and_advantages(b, 0.95);
    b.transitions[0].log_prob = -1e6;
    std::vector<std::size_t> one{0};
    try {
        ppo_loss(b, one, n.policy, n.value, PpoConfig{}, InputScaling{});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("stale"), std::string::npos);
    }
}

TEST(Rollouts, ForcedArrivalTrajectoryLength) {
    Nets n = make_nets(63);
    n.policy.params().setZero();
    n.policy.b3() << 2.0, 0.0;  // 0.2 m per step straight ahead
    n.policy.log_std().setConstant(-30.0);
    EnvConfig env;
    env.max_steps = 5;
    const std::vector<Vec2> s{Vec2(0, 0)}, d{Vec2(2.5, 0)};
    Rng rng(64);
    EpisodeOptions opts;
    const RolloutBuffer b = run_episode(n.policy, &n.value, make_world(s, d, Rect{}), env, &rng, 0, opts);
    ASSERT_EQ(b.transitions.size(), 3u);
    EXPECT_TRUE(b.transitions[2].done);
    EXPECT_FALSE(b.trajectories[0].truncated);
    EXPECT_EQ(b.episodes[0].arrived, 1);
    EXPECT_NEAR(b.transitions[2].reward, 100.0 + time_reward(2.5, env.reward, 0.1, 2.0) -
                                             0.0, 1e-12);
    EXPECT_NEAR(b.transitions[0].reward, time_reward(2.5, env.reward, 0.1, 2.0) - 2.0, 1e-12);
}

TEST(Rollouts, BookkeepingAndDeterminism) {
    const Nets n = make_nets(65);
    ScenarioConfig sc;
    sc.fixed_agents = 3;
    EnvConfig env;
    env.max_steps = 30;
    const auto a = collect_rollouts(n.policy, n.value, random_scenarios(sc), env, 7, 0, 2);
    const auto b = collect_rollouts(n.policy, n.value, random_scenarios(sc), env, 7, 0, 2);
    const auto c = collect_rollouts(n.policy, n.value, random_scenarios(sc), env, 7, 0, 2, 1.0, 2);
    ASSERT_EQ(a.transitions.size(), b.transitions.size());
    ASSERT_EQ(a.transitions.size(), c.transitions.size());
    for (std::size_t k = 0; k < a.transitions.size(); ++k) {
        EXPECT_EQ(a.transitions[k].action, b.transitions[k].action);
        EXPECT_EQ(a.transitions[k].reward, b.transitions[k].reward);
        EXPECT_EQ(a.transitions[k].action, c.transitions[k].action);
    }
    std::set<int> agents;
    for (const auto& t : a.transitions) {
        if (t.episode_id == 0) agents.insert(t.agent_id);
        EXPECT_TRUE(std::isfinite(t.log_prob));
        EXPECT_TRUE(std::isfinite(t.reward));
    }
    EXPECT_EQ(agents.size(), 3u);
    for (const auto& tj : a.trajectories) {
        for (std::size_t t = tj.begin; t < tj.end; ++t) {
            EXPECT_EQ(a.transitions[t].agent_id, tj.agent_id);
            EXPECT_EQ(a.transitions[t].episode_id, tj.episode_id);
        }
    }
}

TEST(Rollouts, RewardScaleOnlyScalesRewards) {
    const Nets n = make_nets(66);
    ScenarioConfig sc;
    sc.fixed_agents = 2;
    EnvConfig env;
    env.max_steps = 20;
    const auto raw = collect_rollouts(n.policy, n.value, random_scenarios(sc), env, 3, 0, 1, 1.0);
    const auto scaled = collect_rollouts(n.policy, n.value, random_scenarios(sc), env, 3, 0, 1, 0.01);
    ASSERT_EQ(raw.transitions.size(), scaled.transitions.size());
    for (std::size_t k = 0; k < raw.transitions.size(); ++k) {
        EXPECT_NEAR(scaled.transitions[k].reward, 0.01 * raw.transitions[k].reward, 1e-12);
    }
    EXPECT_EQ(raw.episodes[0].reward_sum, scaled.episodes[0].reward_sum);
}

namespace {
TrainConfig smoke_config() {
    TrainConfig cfg;
    cfg.policy_dims = NetworkDims::policy(EncoderKind::Lstm, 8);
    cfg.value_dims = NetworkDims::value(EncoderKind::Lstm, 8);
    cfg.scenario.fixed_agents = 1;
    cfg.ppo.rollout_episodes = 10;
    cfg.ppo.epochs = 4;
    cfg.ppo.lr = 1e-3;
    cfg.total_episodes = 200;
    cfg.seed = 5;
    return cfg;
}
}  // namespace

TEST(Train, SoloSmokeRewardImproves) {
    const TrainConfig cfg = smoke_config();
    TrainState st = init_train_state(cfg);
    const auto log = train(st, cfg);
    ASSERT_EQ(log.size(), 20u);
    double first = 0.0, last = 0.0;
    for (int k = 0; k < 5; ++k) {
        first += log[k].mean_reward;
        last += log[log.size() - 1 - k].mean_reward;
    }
    EXPECT_GT(last, first);
    EXPECT_EQ(st.episodes_seen, 200);
}

TEST(Train, SeededRunsIdenticalAndZeroLrFreezes) {
    TrainConfig cfg = smoke_config();
    cfg.total_episodes = 20;
    TrainState a = init_train_state(cfg), b = init_train_state(cfg);
    const auto la = train(a, cfg), lb = train(b, cfg);
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t k = 0; k < la.size(); ++k) {
        EXPECT_EQ(la[k].mean_reward, lb[k].mean_reward);
        EXPECT_EQ(la[k].policy_loss, lb[k].policy_loss);
    }
    EXPECT_EQ(a.policy.params(), b.policy.params());

    cfg.ppo.lr = 0.0;
    TrainState z = init_train_state(cfg);
    const Eigen::VectorXd p0 = z.policy.params(), v0 = z.value.params();
    train(z, cfg);
    EXPECT_EQ(z.policy.params(), p0);
    EXPECT_EQ(z.value.params(), v0);
}

TEST(Train, ConfigValidation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.ppo.gamma = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.env.sim.arrival_radius = 3.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
