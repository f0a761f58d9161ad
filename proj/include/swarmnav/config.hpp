#pragma once

// Run configuration files.
//
// The file format is a small TOML subset: [section] headers, `key = value`
// lines, `#` comments. Values are strings, integers, floats, booleans or
// single-line arrays of those. Every key has a default except network.encoder
// and train.episodes.

#include "swarmnav/ppo.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace swarmnav {

/// Parses the TOML subset into {section: {key: value}}. Top-level keys before
/// any header land in section "". Throws ConfigError("<source>:<line>", ...).
nlohmann::json parse_toml(const std::string& text, const std::string& source = "config");

/// Parses one value as it would appear on the right of `=`.
nlohmann::json parse_toml_value(const std::string& text, const std::string& where = "value");

/// Serializes a {section: {key: value}} tree. Floats keep a decimal point and
/// round-trip exactly.
std::string to_toml(const nlohmann::json& tree);

struct RunConfig {
    TrainConfig train;
    std::string output_root = "runs";
    std::int64_t checkpoint_every = 10;  // iterations; 0 keeps only the final one

    void validate() const;
};

/// Builds a RunConfig from a parsed tree. Unknown sections or keys, wrong
/// types and missing required fields throw ConfigError naming "section.key".
RunConfig run_config_from_tree(const nlohmann::json& tree);

/// Every field, suitable for to_toml. Parsing it back gives the same config.
nlohmann::json run_config_to_tree(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);

/// Applies "section.key=value" onto a parsed tree.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// FNV-1a of the canonical snapshot text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace swarmnav
