#pragma once

#include "swarmnav/rng.hpp"
#include "swarmnav/sim.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace swarmnav {

struct ScenarioConfig {
    double p_geo = 1.0 / 3.0;
    int max_agents = 5;
    /// When > 0, every scenario has exactly this many agents (evaluation sweeps).
    int fixed_agents = 0;
    Rect arena{};
    double min_separation = 8.0;      // m, between starts and between destinations
    double min_route_length = 10.0;   // m
    std::uint64_t seed = 0;
    int placement_attempts = 1000;    // per agent

    void validate() const;
};

/// Draw from the geometric distribution on {1, 2, ...}; draws above
/// max_agents are rejected and redrawn.
int sample_agent_count(Rng& rng, const ScenarioConfig& cfg);

/// Untruncated geometric draw, by inversion of one uniform.
int sample_geometric(Rng& rng, double p);

/// Probability mass of the untruncated geometric distribution.
double geometric_pmf(int n, double p);

struct Scenario {
    std::vector<Vec2> starts;
    std::vector<Vec2> destinations;
    Rect arena;
    std::uint64_t seed = 0;

    WorldState world() const { return make_world(starts, destinations, arena); }
};

/// Places `count` agents uniformly in the arena respecting the separation and
/// route-length constraints. Throws ContractViolation naming the constraint if
/// placement fails within the attempt budget.
Scenario place_agents(Rng& rng, const ScenarioConfig& cfg, int count);

/// Samples an agent count (or uses fixed_agents) and places the agents. If
/// placement fails the count is redrawn a bounded number of times.
Scenario generate_scenario(Rng& rng, const ScenarioConfig& cfg);

/// Scenario number `index` of the stream defined by cfg.seed.
Scenario scenario_at(const ScenarioConfig& cfg, std::uint64_t index);

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
void save_scenario(const std::string& path, const Scenario& s);
Scenario load_scenario(const std::string& path);

}  // namespace swarmnav
