#include "swarmnav/checkpoint.hpp"
#include "swarmnav/config.hpp"
#include "swarmnav/error.hpp"
#include "swarmnav/eval.hpp"
#include "swarmnav/run.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace swarmnav;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kCheckpoint = 3, kNumeric = 4 };

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(flag, "expected a comma-separated list of numbers, got '" + s + "'");
        }
    }
    if (out.empty()) throw ConfigError(flag, "empty list");
    return out;
}

nlohmann::json read_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml(ss.str(), path);
}

// Config used to interpret a checkpoint: --config if given, else the run's
// snapshot, else defaults with the checkpoint's encoder.
RunConfig config_for_checkpoint(const LoadedCheckpoint& ckpt, const std::string& config_path) {
    const NetworkDims found = find_role(ckpt.nets, NetworkRole::Policy).net.dims();
    fs::path path = config_path;
    if (path.empty()) {
        const fs::path snap = run_dir_of(ckpt.bin) / "config.toml";
        if (fs::exists(snap)) path = snap;
    }
    RunConfig cfg;
    if (!path.empty()) {
        cfg = load_run_config(path.string());
    } else {
        cfg.train.policy_dims = found;
        cfg.train.value_dims = found;
        cfg.train.value_dims.outputs = 1;
        cfg.train.value_dims.log_std = false;
    }
    check_dims(cfg.train.policy_dims, found, "policy");
    return cfg;
}

fs::path default_eval_dir(const LoadedCheckpoint& ckpt) {
    const fs::path run = run_dir_of(ckpt.bin);
    if (fs::exists(run / "config.toml")) return run / "eval";
    return fs::path("eval");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string resume;
    std::string output;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::int64_t episodes = -1;
    int workers = 0;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    fs::path run_dir;
    std::optional<LoadedCheckpoint> ckpt;
    std::string config_path = a.config;
    if (!a.resume.empty()) {
        ckpt = load_checkpoint(a.resume);
        run_dir = run_dir_of(ckpt->bin);
        if (config_path.empty()) config_path = (run_dir / "config.toml").string();
    }
    if (config_path.empty()) throw ConfigError("--config", "required (or --resume a checkpoint)");

    nlohmann::json tree = read_tree(config_path);
    for (const auto& o : a.overrides) apply_override(tree, o);
    if (a.seed >= 0) tree["train"]["seed"] = a.seed;
    if (a.episodes >= 0) tree["train"]["episodes"] = a.episodes;
    if (a.workers > 0) tree["train"]["workers"] = a.workers;
    if (!a.output.empty()) {
        tree["run"]["output_root"] = a.output;
    } else if (!tree.contains("run") || !tree["run"].contains("output_root")) {
        tree["run"]["output_root"] = default_output_root("runs");
    }
    const RunConfig cfg = run_config_from_tree(tree);

    TrainState state = ckpt ? restore_train_state(*ckpt, cfg) : init_train_state(cfg.train);
    if (ckpt) {
        if (ckpt->manifest.contains("encoder") &&
            ckpt->manifest["encoder"] != to_string(cfg.train.policy_dims.encoder)) {
            throw CheckpointError("encoder mismatch: config says " + to_string(cfg.train.policy_dims.encoder) +
                                  ", checkpoint has " + ckpt->manifest["encoder"].get<std::string>());
        }
        truncate_metrics(run_dir / "metrics.csv", state.iteration);
        std::cerr << "resuming " << run_dir.string() << " at iteration " << state.iteration << "\n";
    } else {
        run_dir = create_run_dir(cfg.output_root, cfg);
        std::ofstream(run_dir / "metrics.csv") << kMetricsHeader << "\n";
    }
    std::cout << "run directory: " << run_dir.string() << "\n" << std::flush;

    std::ofstream metrics(run_dir / "metrics.csv", std::ios::app);
    const auto t0 = std::chrono::steady_clock::now();
    std::int64_t last_saved = -1;
    try {
        while (state.episodes_seen < cfg.train.total_episodes) {
            const IterationMetrics m = train_iteration(state, cfg.train);
            write_metrics_row(metrics, m);
            metrics.flush();
            if (!a.quiet) {
                const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                std::printf("iter %5lld  episodes %7lld  reward %9.2f  arrival %.3f  collisions %3lld  |dv| %.3f  %.0fs\n",
                            static_cast<long long>(m.iteration), static_cast<long long>(m.episodes_seen),
                            m.mean_reward, m.arrival_rate, static_cast<long long>(m.collision_events),
                            m.mean_abs_dv, el);
                std::fflush(stdout);
            }
            if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
                save_checkpoint(run_dir, state, cfg);
                last_saved = state.iteration;
            }
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric abort at iteration " << state.iteration + 1 << ": " << e.what() << "\n";
        if (last_saved >= 0) std::cerr << "last checkpoint: iteration " << last_saved << "\n";
        return kNumeric;
    }
    if (last_saved != state.iteration) save_checkpoint(run_dir, state, cfg);
    std::cout << "done: " << state.iteration << " iterations, " << state.episodes_seen << " episodes\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, config, output;
    std::int64_t episodes = 100;
    int agents = 0;
    double arena_scale = 1.0;
    std::int64_t max_steps = 0;
    std::uint64_t seed = 12345;
    int workers = 1;
    bool stochastic = false;
    int tracks = 5;
};

int cmd_eval(const EvalArgs& a) {
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const RunConfig cfg = config_for_checkpoint(ckpt, a.config);
    const Network& policy = find_role(ckpt.nets, NetworkRole::Policy).net;

    ScenarioConfig sc = cfg.train.scenario;
    if (a.agents > 0) sc.fixed_agents = a.agents;
    if (!(a.arena_scale > 0.0)) throw ConfigError("--arena-scale", "must be > 0");
    sc.arena = sc.arena.scaled(a.arena_scale);
    EnvConfig env = cfg.train.env;
    env.max_steps = a.max_steps > 0 ? a.max_steps
                                    : static_cast<std::int64_t>(std::ceil(double(env.max_steps) * a.arena_scale));
    sc.validate();
    env.validate();
    if (a.episodes < 1) throw ConfigError("--episodes", "must be >= 1");

    const auto stats = evaluate_policy(policy, sc, env, a.episodes, !a.stochastic, a.seed, a.workers);
    const EvalMetrics m = summarize(stats);

    const fs::path out = a.output.empty() ? default_eval_dir(ckpt) : fs::path(a.output);
    fs::create_directories(out);
    if (a.tracks > 0) {
        std::ofstream tracks(out / "tracks.csv");
        for (std::int64_t e = 0; e < std::min<std::int64_t>(a.tracks, a.episodes); ++e) {
            evaluate_episode(policy, sc, env, !a.stochastic, a.seed, e, &tracks);
        }
    }
    nlohmann::json j = m.to_json();
    j["checkpoint"] = ckpt.bin.string();
    j["deterministic"] = !a.stochastic;
    j["seed"] = a.seed;
    j["fixed_agents"] = sc.fixed_agents;
    j["arena_scale"] = a.arena_scale;
    j["max_steps"] = env.max_steps;
    std::ofstream(out / "metrics.json") << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    return kOk;
}

struct HeatmapArgs {
    std::string checkpoint, config, output, preset = "head_on";
    double resolution = 0.5;
    double extent = 30.0;
};

int cmd_heatmap(const HeatmapArgs& a) {
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const RunConfig cfg = config_for_checkpoint(ckpt, a.config);
    HeatmapSpec spec = heatmap_preset(a.preset);
    spec.resolution = a.resolution;
    spec.bounds = Rect{-a.extent, -a.extent, a.extent, a.extent};
    spec.speed = cfg.train.env.sim.v_max;
    const Heatmap map =
        commanded_angle_map(find_role(ckpt.nets, NetworkRole::Policy).net, spec, cfg.train.env.scaling);
    const fs::path out = a.output.empty() ? default_eval_dir(ckpt) : fs::path(a.output);
    fs::create_directories(out);
    const fs::path csv = out / ("heatmap_" + a.preset + ".csv");
    const fs::path js = out / ("heatmap_" + a.preset + ".json");
    write_heatmap(map, csv.string(), js.string());
    std::cout << csv.string() << "\n" << js.string() << "\n";
    return kOk;
}

struct FlopsArgs {
    std::int64_t agents = 1;
    int hidden = 63, layer1 = 64, layer2 = 64;
    bool verbose = false;
};

int cmd_flops(const FlopsArgs& a) {
    NetworkDims d = NetworkDims::policy(EncoderKind::Lstm, a.hidden);
    d.layer1 = a.layer1;
    d.layer2 = a.layer2;
    if (a.agents < 1) throw ConfigError("--agents", "must be >= 1");
    std::cout << count_flops(a.agents, d) << "\n";
    if (a.verbose) {
        std::cout << "per neighbor: " << flops_per_neighbor(d) << "\n"
                  << "fixed: " << flops_fixed(d) << "\n"
                  << "encoder iterations: " << a.agents - 1 << "\n";
    }
    return kOk;
}

struct ExportArgs {
    std::string checkpoint, output;
};

int cmd_export(const ExportArgs& a) {
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const Network& policy = find_role(ckpt.nets, NetworkRole::Policy).net;
    fs::path out = a.output.empty() ? default_eval_dir(ckpt) / "policy_export.bin" : fs::path(a.output);
    if (out.extension() != ".bin") out += ".bin";
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_parameters(out.string(), {{NetworkRole::Policy, policy, std::nullopt}}, Precision::Single);
    nlohmann::json m = {{"format", "export"},
                        {"precision", "float32"},
                        {"source", ckpt.bin.string()},
                        {"policy", dims_to_json(policy.dims())}};
    if (ckpt.manifest.contains("iteration")) m["iteration"] = ckpt.manifest["iteration"];
    fs::path manifest = out;
    manifest.replace_extension(".json");
    write_manifest(manifest.string(), m);
    std::cout << out.string() << "\n";
    return kOk;
}

struct SweepArgs {
    std::string checkpoint, config, output, counts = "2,5,10,20,35", scales = "1";
    std::int64_t episodes = 20;
    std::uint64_t seed = 12345;
    int workers = 1;
};

int cmd_sweep(const SweepArgs& a) {
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const RunConfig cfg = config_for_checkpoint(ckpt, a.config);
    std::vector<int> counts;
    for (double c : parse_list(a.counts, "--counts")) {
        if (c < 1 || c != std::floor(c)) throw ConfigError("--counts", "agent counts must be positive integers");
        counts.push_back(static_cast<int>(c));
    }
    const std::vector<double> scales = parse_list(a.scales, "--scales");
    for (double s : scales) {
        if (!(s > 0)) throw ConfigError("--scales", "must be > 0");
    }
    const SweepResult r = scalability_sweep(find_role(ckpt.nets, NetworkRole::Policy).net, counts, scales,
                                            a.episodes, cfg.train.env, cfg.train.scenario, a.seed, a.workers);
    const fs::path out = a.output.empty() ? default_eval_dir(ckpt) : fs::path(a.output);
    fs::create_directories(out);
    std::ofstream csv(out / "sweep.csv");
    csv << "agents,arena_scale,episodes,arrival_rate,collision_events,collision_free_episodes,mean_abs_dv,"
           "step_seconds\n";
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.points) {
        csv << p.agents << ',' << p.arena_scale << ',' << p.metrics.episodes << ',' << p.metrics.arrival_rate << ','
            << p.metrics.collision_events << ',' << p.metrics.collision_free_episodes << ','
            << p.metrics.mean_abs_dv << ',' << p.step_seconds << '\n';
        nlohmann::json j = p.metrics.to_json();
        j["agents"] = p.agents;
        j["arena_scale"] = p.arena_scale;
        j["step_seconds"] = p.step_seconds;
        pts.push_back(j);
    }
    nlohmann::json j = {{"points", pts},
                        {"timing_fit",
                         {{"slope", r.timing.slope}, {"intercept", r.timing.intercept},
                          {"r_squared", r.timing.r_squared}}}};
    std::ofstream(out / "sweep.json") << j.dump(2) << "\n";
    std::cout << j["timing_fit"].dump() << "\n" << (out / "sweep.csv").string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent collision avoidance with PPO and an LSTM neighbor encoder"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a policy and write a run directory");
    train->add_option("--config", ta.config, "TOML config file");
    train->add_option("--resume", ta.resume, "Checkpoint to continue from");
    train->add_option("--seed", ta.seed, "Override train.seed");
    train->add_option("--episodes", ta.episodes, "Override train.episodes (total budget)");
    train->add_option("--workers", ta.workers, "Rollout threads (results do not depend on it)");
    train->add_option("--output", ta.output, "Output root (default $SWARMNAV_OUTPUT_ROOT or ./runs)");
    train->add_option("--set", ta.overrides, "Override a field, e.g. --set ppo.lr=1e-3");
    train->add_flag("--quiet", ta.quiet, "No per-iteration progress lines");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on random scenarios");
    eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint (.bin or stem)")->required();
    eval->add_option("--config", ea.config, "Config (default: the run's snapshot)");
    eval->add_option("--episodes", ea.episodes, "Number of scenarios");
    eval->add_option("--agents", ea.agents, "Fixed agent count (default: training distribution)");
    eval->add_option("--arena-scale", ea.arena_scale, "Arena and step budget multiplier");
    eval->add_option("--max-steps", ea.max_steps, "Step budget (overrides the scaled one)");
    eval->add_option("--seed", ea.seed, "Scenario stream seed");
    eval->add_option("--workers", ea.workers, "Threads");
    eval->add_flag("--stochastic", ea.stochastic, "Sample actions instead of using the policy mean");
    eval->add_option("--tracks", ea.tracks, "Write ground tracks for the first N episodes");
    eval->add_option("--output", ea.output, "Output directory (default: <run>/eval)");

    HeatmapArgs ha;
    auto* heat = app.add_subcommand("heatmap", "Commanded heading change over a grid of ego positions");
    heat->add_option("--checkpoint", ha.checkpoint, "Checkpoint (.bin or stem)")->required();
    heat->add_option("--config", ha.config, "Config (default: the run's snapshot)");
    heat->add_option("--preset", ha.preset, "head_on, four or empty");
    heat->add_option("--resolution", ha.resolution, "Cell size, m");
    heat->add_option("--extent", ha.extent, "Half width of the square grid, m");
    heat->add_option("--output", ha.output, "Output directory (default: <run>/eval)");

    FlopsArgs fa;
    auto* flops = app.add_subcommand("flops", "Floating point operations per policy evaluation");
    flops->add_option("--agents", fa.agents, "Agents in view, ego included")->required();
    flops->add_option("--hidden", fa.hidden, "LSTM state size");
    flops->add_option("--layer1", fa.layer1, "First MLP layer");
    flops->add_option("--layer2", fa.layer2, "Second MLP layer");
    flops->add_flag("--verbose", fa.verbose, "Print the per-neighbor and fixed terms");

    ExportArgs xa;
    auto* exp = app.add_subcommand("export", "Write single-precision policy weights");
    exp->add_option("--checkpoint", xa.checkpoint, "Checkpoint (.bin or stem)")->required();
    exp->add_option("--output", xa.output, "Output .bin path");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "Metrics and step time across agent counts and arena sizes");
    sweep->add_option("--checkpoint", sa.checkpoint, "Checkpoint (.bin or stem)")->required();
    sweep->add_option("--config", sa.config, "Config (default: the run's snapshot)");
    sweep->add_option("--counts", sa.counts, "Comma-separated agent counts");
    sweep->add_option("--scales", sa.scales, "Comma-separated arena scale factors");
    sweep->add_option("--episodes", sa.episodes, "Episodes per point (0 = timing only)");
    sweep->add_option("--seed", sa.seed, "Scenario stream seed");
    sweep->add_option("--workers", sa.workers, "Threads");
    sweep->add_option("--output", sa.output, "Output directory (default: <run>/eval)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*heat) return cmd_heatmap(ha);
        if (*flops) return cmd_flops(fa);
        if (*exp) return cmd_export(xa);
        if (*sweep) return cmd_sweep(sa);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kCheckpoint;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
