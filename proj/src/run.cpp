#include "swarmnav/run.hpp"

#include "swarmnav/error.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace swarmnav {

namespace fs = std::filesystem;

std::string default_output_root(const std::string& fallback) {
    const char* env = std::getenv("SWARMNAV_OUTPUT_ROOT");
    return env && *env ? std::string(env) : fallback;
}

fs::path create_run_dir(const fs::path& root, const RunConfig& cfg) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string(stamp) + "-" + to_string(cfg.train.policy_dims.encoder) + "-s" +
                             std::to_string(cfg.train.seed);
    fs::create_directories(root);
    fs::path dir = root / base;
    for (int k = 1; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
    fs::create_directories(dir / "checkpoints");
    fs::create_directories(dir / "eval");
    std::ofstream out(dir / "config.toml");
    out << "# config hash " << config_hash(cfg) << "\n" << to_toml(run_config_to_tree(cfg));
    if (!out) throw ConfigError((dir / "config.toml").string(), "cannot write config snapshot");
    return dir;
}

void write_metrics_row(std::ostream& out, const IterationMetrics& m) {
    out << m.iteration << ',' << m.episodes_seen << ',' << std::setprecision(10) << m.mean_reward << ','
        << m.arrival_rate << ',' << m.collision_events << ',' << m.mean_abs_dv << ',' << m.policy_loss << ','
        << m.value_loss << ',' << m.clip_fraction << '\n';
}

void truncate_metrics(const fs::path& csv, std::int64_t keep_through) {
    std::ifstream in(csv);
    if (!in) return;
    std::string line, kept;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            kept += line + "\n";
            header = false;
            continue;
        }
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) <= keep_through) kept += line + "\n";
    }
    in.close();
    std::ofstream(csv, std::ios::trunc) << kept;
}

fs::path save_checkpoint(const fs::path& run_dir, const TrainState& state, const RunConfig& cfg) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06lld", static_cast<long long>(state.iteration));
    const fs::path dir = run_dir / "checkpoints";
    fs::create_directories(dir);
    const fs::path bin = dir / (std::string(name) + ".bin");
    const fs::path tmp = dir / (std::string(name) + ".bin.tmp");
    write_parameters(tmp.string(),
                     {{NetworkRole::Policy, state.policy, state.policy_adam},
                      {NetworkRole::Value, state.value, state.value_adam}},
                     Precision::Double);
    fs::rename(tmp, bin);
    nlohmann::json m = {{"format", "checkpoint"},
                        {"iteration", state.iteration},
                        {"episodes_seen", state.episodes_seen},
                        {"seed", cfg.train.seed},
                        {"config_hash", config_hash(cfg)},
                        {"encoder", to_string(cfg.train.policy_dims.encoder)},
                        {"policy", dims_to_json(state.policy.dims())},
                        {"value", dims_to_json(state.value.dims())}};
    write_manifest((dir / (std::string(name) + ".json")).string(), m);
    return bin;
}

fs::path checkpoint_bin_path(const std::string& path) {
    fs::path p(path);
    if (p.extension() == ".bin") return p;
    if (p.extension() == ".json") return p.replace_extension(".bin");
    return fs::path(path + ".bin");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    LoadedCheckpoint c;
    c.bin = checkpoint_bin_path(path);
    if (!fs::exists(c.bin)) throw CheckpointError(c.bin.string() + ": no such checkpoint");
    c.nets = read_parameters(c.bin.string());
    fs::path manifest = c.bin;
    manifest.replace_extension(".json");
    c.manifest = fs::exists(manifest) ? read_manifest(manifest.string()) : nlohmann::json::object();
    const auto& p = find_role(c.nets, NetworkRole::Policy);
    if (c.manifest.contains("policy") && dims_from_json(c.manifest["policy"]) != p.net.dims()) {
        throw CheckpointError(c.bin.string() + ": manifest dims (" + describe(dims_from_json(c.manifest["policy"])) +
                              ") disagree with file (" + describe(p.net.dims()) + ")");
    }
    return c;
}

void check_dims(const NetworkDims& expected, const NetworkDims& found, const std::string& what) {
    if (expected != found) {
        throw CheckpointError(what + " architecture mismatch: expected " + describe(expected) + ", found " +
                              describe(found));
    }
}

TrainState restore_train_state(const LoadedCheckpoint& ckpt, const RunConfig& cfg) {
    const auto& p = find_role(ckpt.nets, NetworkRole::Policy);
    const auto& v = find_role(ckpt.nets, NetworkRole::Value);
    check_dims(cfg.train.policy_dims, p.net.dims(), "policy");
    check_dims(cfg.train.value_dims, v.net.dims(), "value");
    if (!p.adam || !v.adam) throw CheckpointError(ckpt.bin.string() + ": no optimizer state (export file?)");
    if (!ckpt.manifest.contains("iteration") || !ckpt.manifest.contains("episodes_seen")) {
        throw CheckpointError(ckpt.bin.string() + ": manifest lacks iteration counters");
    }
    TrainState s{p.net, v.net, *p.adam, *v.adam, ckpt.manifest["iteration"].get<std::int64_t>(),
                 ckpt.manifest["episodes_seen"].get<std::int64_t>()};
    return s;
}

fs::path run_dir_of(const fs::path& checkpoint_bin) {
    return fs::absolute(checkpoint_bin).parent_path().parent_path();
}

}  // namespace swarmnav
