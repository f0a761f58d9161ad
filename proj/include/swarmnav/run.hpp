#pragma once

// Run directories:
//   <root>/<timestamp>-<encoder>-s<seed>/
//     config.toml         resolved configuration
//     metrics.csv         one row per training iteration
//     checkpoints/ckpt_NNNNNN.bin + .json manifest
//     eval/

#include "swarmnav/checkpoint.hpp"
#include "swarmnav/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace swarmnav {

/// Output root from the SWARMNAV_OUTPUT_ROOT environment variable, else `fallback`.
std::string default_output_root(const std::string& fallback);

/// Creates a fresh directory under `root` and writes config.toml into it.
std::filesystem::path create_run_dir(const std::filesystem::path& root, const RunConfig& cfg);

inline constexpr const char* kMetricsHeader =
    "iteration,episodes,mean_reward,arrival_rate,collision_events,mean_abs_dv,policy_loss,value_loss,clip_fraction";

void write_metrics_row(std::ostream& out, const IterationMetrics& m);

/// Drops rows with iteration > keep_through (used when resuming).
void truncate_metrics(const std::filesystem::path& csv, std::int64_t keep_through);

/// Writes checkpoints/ckpt_<iteration>.bin and its manifest; returns the .bin path.
std::filesystem::path save_checkpoint(const std::filesystem::path& run_dir, const TrainState& state,
                                      const RunConfig& cfg);

/// Accepts the .bin path, the .json path or the bare stem.
std::filesystem::path checkpoint_bin_path(const std::string& path);

struct LoadedCheckpoint {
    std::vector<StoredNetwork> nets;
    nlohmann::json manifest;  // empty object when no manifest sits next to the file
    std::filesystem::path bin;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Throws CheckpointError naming expected and found dims on mismatch.
void check_dims(const NetworkDims& expected, const NetworkDims& found, const std::string& what);

/// Training state from a checkpoint, checked against the config's dims.
TrainState restore_train_state(const LoadedCheckpoint& ckpt, const RunConfig& cfg);

/// The run directory a checkpoint belongs to (parent of checkpoints/).
std::filesystem::path run_dir_of(const std::filesystem::path& checkpoint_bin);

}  // namespace swarmnav
