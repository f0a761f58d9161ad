#pragma once

// Binary parameter files.
//
// Layout (all integers and floats little-endian):
//   char[8]  magic        "SWNVCKPT" (training checkpoint) or "SWNVEXPT" (export)
//   u32      version      1
//   u32      scalar bytes 8 (checkpoint, IEEE-754 double) or 4 (export, single)
//   u32      network count
//   per network:
//     u32 role (0 policy, 1 value)
//     u32 encoder (0 lstm, 1 occupancy)
//     u32 hidden, input, layer1, layer2, outputs, grid_radial, grid_angular, has_log_std
//     u64 parameter count
//     parameters, in this order, matrices row-major:
//       LSTM:  W_i U_i b_i  W_f U_f b_f  W_o U_o b_o  W_c U_c b_c
//       MLP:   W1 b1  W2 b2  W3 b3
//       policy: log_std
//   u32      optimizer present (checkpoint only; 0 in exports)
//   if present, per network: u64 step, then m and v in flat order (doubles)
//
// A JSON manifest with the same stem sits next to every file.

#include "swarmnav/network.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace swarmnav {

enum class NetworkRole : std::uint32_t { Policy = 0, Value = 1 };

struct StoredNetwork {
    NetworkRole role = NetworkRole::Policy;
    Network net;
    std::optional<AdamState> adam;
};

/// Parameters in file order (row-major, gates i f o c); `params` in flat order.
std::vector<double> to_file_order(const Network& net);
void from_file_order(Network& net, const std::vector<double>& values);

enum class Precision { Double, Single };

void write_parameters(const std::string& path, const std::vector<StoredNetwork>& nets,
                      Precision precision);
std::vector<StoredNetwork> read_parameters(const std::string& path);

void write_manifest(const std::string& path, const nlohmann::json& manifest);
nlohmann::json read_manifest(const std::string& path);

nlohmann::json dims_to_json(const NetworkDims& d);
NetworkDims dims_from_json(const nlohmann::json& j);

/// Finds the network with the given role; throws CheckpointError if absent.
const StoredNetwork& find_role(const std::vector<StoredNetwork>& nets, NetworkRole role);

}  // namespace swarmnav
