#include "swarmnav/eval.hpp"

#include "swarmnav/error.hpp"
#include "swarmnav/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <thread>

namespace swarmnav {

namespace {
constexpr double kPi = std::numbers::pi;

AgentState moving_agent(const Vec2& pos, double heading, double speed, const Vec2& dest) {
    AgentState a;
    a.position = pos;
    a.heading = heading;
    a.velocity = speed * Vec2(std::cos(heading), std::sin(heading));
    a.destination = dest;
    return a;
}
}  // namespace

void HeatmapSpec::validate() const {
    if (!(resolution > 0.0)) throw ContractViolation("heatmap: resolution must be positive");
    if (!(bounds.width() >= resolution && bounds.height() >= resolution)) {
        throw ContractViolation("heatmap: grid bounds smaller than one cell");
    }
    for (const auto& f : fixed_agents) {
        const Vec2& p = f.position;
        if (p.x() < bounds.x_min || p.x() > bounds.x_max || p.y() < bounds.y_min || p.y() > bounds.y_max) {
            throw ContractViolation("heatmap: fixed agent outside the grid");
        }
    }
}

HeatmapSpec heatmap_preset(const std::string& name) {
    HeatmapSpec s;
    if (name == "head_on") {
        s.fixed_agents = {{Vec2(0, 0), kPi}};
    } else if (name == "four") {
        s.fixed_agents = {{Vec2(-20, -20), 0.0}, {Vec2(10, 10), kPi}, {Vec2(20, 20), kPi}};
    } else if (name != "empty") {
        throw ConfigError("heatmap.preset", "unknown preset '" + name + "' (head_on, four, empty)");
    }
    return s;
}

Heatmap commanded_angle_map(const Network& policy, const HeatmapSpec& spec, const InputScaling& scaling) {
    spec.validate();
    Heatmap map;
    map.spec = spec;
    const auto nx = static_cast<Eigen::Index>(std::floor(spec.bounds.width() / spec.resolution + 1e-9));
    const auto ny = static_cast<Eigen::Index>(std::floor(spec.bounds.height() / spec.resolution + 1e-9));
    for (Eigen::Index i = 0; i < nx; ++i) map.xs.push_back(spec.bounds.x_min + (double(i) + 0.5) * spec.resolution);
    for (Eigen::Index j = 0; j < ny; ++j) map.ys.push_back(spec.bounds.y_min + (double(j) + 0.5) * spec.resolution);
    map.delta_deg.resize(nx, ny);

    WorldState world;
    world.agents.resize(spec.fixed_agents.size() + 1);
    for (std::size_t k = 0; k < spec.fixed_agents.size(); ++k) {
        const auto& f = spec.fixed_agents[k];
        world.agents[k + 1] = moving_agent(f.position, f.heading, spec.speed, f.position);
    }
    const Vec2 ahead(std::cos(spec.ego_heading), std::sin(spec.ego_heading));
    for (Eigen::Index i = 0; i < nx; ++i) {
        for (Eigen::Index j = 0; j < ny; ++j) {
            const Vec2 p(map.xs[i], map.ys[j]);
            world.agents[0] =
                moving_agent(p, spec.ego_heading, spec.speed, p + spec.destination_distance * ahead);
            const Eigen::Vector2d a = policy_forward(policy, observe(world, 0), scaling);
            map.delta_deg(i, j) = wrap_angle(std::atan2(a.y(), a.x())) * 180.0 / kPi;
        }
    }
    return map;
}

void write_heatmap(const Heatmap& map, const std::string& csv_path, const std::string& json_path) {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw ConfigError(csv_path, "cannot open for writing");
    csv << std::setprecision(9) << "x_m\\y_m";
    for (double y : map.ys) csv << ',' << y;
    csv << '\n';
    for (Eigen::Index i = 0; i < map.delta_deg.rows(); ++i) {
        csv << map.xs[i];
        for (Eigen::Index j = 0; j < map.delta_deg.cols(); ++j) csv << ',' << map.delta_deg(i, j);
        csv << '\n';
    }

    nlohmann::json fixed = nlohmann::json::array();
    for (const auto& f : map.spec.fixed_agents) {
        fixed.push_back({{"x_m", f.position.x()}, {"y_m", f.position.y()}, {"heading_rad", f.heading}});
    }
    const auto& b = map.spec.bounds;
    nlohmann::json side = {
        {"quantity", "commanded heading change"},
        {"units", "deg"},
        {"bounds_m", {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}}},
        {"resolution_m", map.spec.resolution},
        {"rows", "x (north), cell centers"},
        {"cols", "y (east), cell centers"},
        {"shape", {map.delta_deg.rows(), map.delta_deg.cols()}},
        {"ego_heading_rad", map.spec.ego_heading},
        {"destination_distance_m", map.spec.destination_distance},
        {"fixed_agents", fixed},
        {"color_clip_deg", 10.0},
    };
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) throw ConfigError(json_path, "cannot open for writing");
    js << side.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

nlohmann::json EvalMetrics::to_json() const {
    return {{"episodes", episodes},
            {"agents", agents},
            {"arrived", arrived},
            {"arrival_rate", arrival_rate},
            {"collision_events", collision_events},
            {"collision_free_episodes", collision_free_episodes},
            {"delta_zone_steps", delta_zone_steps},
            {"mean_path_ratio", mean_path_ratio},
            {"mean_abs_dv", mean_abs_dv},
            {"mean_reward", mean_reward}};
}

EvalMetrics summarize(std::span<const EpisodeStats> episodes) {
    EvalMetrics m;
    double ratio_sum = 0.0, dv_sum = 0.0, reward_sum = 0.0;
    std::int64_t ratio_n = 0, agent_steps = 0;
    for (const auto& e : episodes) {
        m.episodes += 1;
        m.agents += e.agents;
        m.arrived += e.arrived;
        m.collision_events += e.collision_events;
        if (e.collision_events == 0) m.collision_free_episodes += 1;
        m.delta_zone_steps += e.delta_zone_steps;
        ratio_sum += e.path_ratio_sum;
        ratio_n += e.path_ratio_count;
        dv_sum += e.abs_dv_sum;
        agent_steps += e.agent_steps;
        reward_sum += e.reward_sum;
    }
    if (m.agents > 0) {
        m.arrival_rate = double(m.arrived) / double(m.agents);
        m.mean_reward = reward_sum / double(m.agents);
    }
    if (ratio_n > 0) m.mean_path_ratio = ratio_sum / double(ratio_n);
    if (agent_steps > 0) m.mean_abs_dv = dv_sum / double(agent_steps);
    return m;
}

EpisodeStats run_ground_tracks(const Network& policy, const Scenario& scenario, const EnvConfig& env,
                               bool deterministic, std::uint64_t seed, std::int64_t episode_id,
                               std::ostream* tracks) {
    Rng rng(seed);
    EpisodeOptions opts;
    opts.mode = deterministic ? ActionMode::Mean : ActionMode::Sample;
    opts.record_transitions = false;
    std::optional<TrackWriter> writer;
    if (tracks) {
        writer.emplace(*tracks);
        opts.on_world = [&](const WorldState& w) { writer->write(episode_id, w); };
    }
    return run_episode(policy, nullptr, scenario.world(), env, &rng, episode_id, opts).episodes.at(0);
}

EpisodeStats evaluate_episode(const Network& policy, const ScenarioConfig& scenarios, const EnvConfig& env,
                              bool deterministic, std::uint64_t seed, std::int64_t e, std::ostream* tracks) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(e));
    Rng rng(s);
    const Scenario sc = generate_scenario(rng, scenarios);
    return run_ground_tracks(policy, sc, env, deterministic, derive_seed(s, 1), e, tracks);
}

std::vector<EpisodeStats> evaluate_policy(const Network& policy, const ScenarioConfig& scenarios,
                                          const EnvConfig& env, std::int64_t n_episodes,
                                          bool deterministic, std::uint64_t seed, int workers) {
    std::vector<EpisodeStats> out(static_cast<std::size_t>(std::max<std::int64_t>(n_episodes, 0)));
    auto run_one = [&](std::int64_t e) {
        out[static_cast<std::size_t>(e)] = evaluate_episode(policy, scenarios, env, deterministic, seed, e);
    };
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::int64_t>(n_episodes, 1))));
    if (workers == 1) {
        for (std::int64_t e = 0; e < n_episodes; ++e) run_one(e);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::int64_t e = w; e < n_episodes; e += workers) run_one(e);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

// ---------------------------------------------------------------------------

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractViolation("fit_line: need >= 2 paired points");
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0.0) throw ContractViolation("fit_line: x values are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

double policy_step_seconds(const Network& policy, int n_agents, const InputScaling& scaling, int repeats,
                           std::uint64_t seed) {
    if (n_agents < 1) throw ContractViolation("policy_step_seconds: need at least one agent");
    Rng rng(seed);
    WorldState world;
    for (int i = 0; i < n_agents; ++i) {
        world.agents.push_back(moving_agent(Vec2(rng.uniform(-30, 30), rng.uniform(-30, 30)),
                                            rng.uniform(-kPi, kPi), 2.0, Vec2(rng.uniform(-30, 30), 0)));
    }
    using clock = std::chrono::steady_clock;
    // Size blocks so each one lasts roughly a millisecond.
    int calls = 1;
    double sink = 0.0;
    for (;;) {
        const auto t0 = clock::now();
        for (int k = 0; k < calls; ++k) sink += policy_forward(policy, observe(world, 0), scaling)[0];
        if (std::chrono::duration<double>(clock::now() - t0).count() > 1e-3 || calls > (1 << 20)) break;
        calls *= 2;
    }
    std::vector<double> per_call;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = clock::now();
        for (int k = 0; k < calls; ++k) sink += policy_forward(policy, observe(world, 0), scaling)[0];
        per_call.push_back(std::chrono::duration<double>(clock::now() - t0).count() / calls);
    }
    if (!std::isfinite(sink)) throw NumericError("policy_step_seconds: non-finite policy output");
    std::nth_element(per_call.begin(), per_call.begin() + per_call.size() / 2, per_call.end());
    return per_call[per_call.size() / 2];
}

SweepResult scalability_sweep(const Network& policy, std::span<const int> counts,
                              std::span<const double> arena_scales, std::int64_t episodes,
                              const EnvConfig& env, const ScenarioConfig& base, std::uint64_t seed,
                              int workers) {
    SweepResult res;
    std::vector<double> xs, ys;
    for (double scale : arena_scales) {
        for (int n : counts) {
            SweepPoint pt;
            pt.agents = n;
            pt.arena_scale = scale;
            ScenarioConfig sc = base;
            sc.fixed_agents = n;
            sc.arena = base.arena.scaled(scale);
            EnvConfig e = env;
            e.max_steps = static_cast<std::int64_t>(std::ceil(double(env.max_steps) * scale));
            if (episodes > 0) {
                const auto stats = evaluate_policy(policy, sc, e, episodes, true,
                                                   derive_seed(seed, std::uint64_t(n) * 1000 + std::uint64_t(scale * 100)),
                                                   workers);
                pt.metrics = summarize(stats);
            }
            pt.step_seconds = policy_step_seconds(policy, n, env.scaling);
            if (scale == arena_scales.front()) {
                xs.push_back(double(n));
                ys.push_back(pt.step_seconds);
            }
            res.points.push_back(pt);
        }
    }
    if (xs.size() >= 2) res.timing = fit_line(xs, ys);
    return res;
}

}  // namespace swarmnav
