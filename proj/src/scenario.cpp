#include "swarmnav/scenario.hpp"

#include "swarmnav/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace swarmnav {

void ScenarioConfig::validate() const {
    if (!(p_geo > 0.0 && p_geo < 1.0)) throw ConfigError("scenario.p_geo", "must lie in (0, 1)");
    if (max_agents < 1) throw ConfigError("scenario.max_agents", "must be >= 1");
    if (fixed_agents < 0) throw ConfigError("scenario.fixed_agents", "must be >= 0");
    if (!(arena.width() > 0.0 && arena.height() > 0.0)) {
        throw ConfigError("scenario.arena", "must have positive width and height");
    }
    if (min_separation < 0.0) throw ConfigError("scenario.min_separation", "must be >= 0");
    if (!(min_route_length > 0.0)) throw ConfigError("scenario.min_route_length", "must be > 0");
    if (placement_attempts < 1) throw ConfigError("scenario.placement_attempts", "must be >= 1");
}

int sample_geometric(Rng& rng, double p) {
    if (p >= 1.0) return 1;
    // P(N > k) = (1-p)^k  =>  N = 1 + floor(log(U) / log(1-p))
    const double u = rng.uniform01();
    const double k = std::floor(std::log(u) / std::log1p(-p));
    if (k >= 1e9) return 1'000'000'000;
    return 1 + static_cast<int>(k);
}

double geometric_pmf(int n, double p) {
    if (n < 1) return 0.0;
    return std::pow(1.0 - p, n - 1) * p;
}

int sample_agent_count(Rng& rng, const ScenarioConfig& cfg) {
    for (;;) {
        const int n = sample_geometric(rng, cfg.p_geo);
        if (n <= cfg.max_agents) return n;
    }
}

namespace {

Vec2 uniform_point(Rng& rng, const Rect& r) {
    const double x = rng.uniform(r.x_min, r.x_max);
    const double y = rng.uniform(r.y_min, r.y_max);
    return {x, y};
}

bool separated(const std::vector<Vec2>& pts, const Vec2& p, double min_sep) {
    for (const auto& q : pts) {
        if ((q - p).norm() < min_sep) return false;
    }
    return true;
}

}  // namespace

Scenario place_agents(Rng& rng, const ScenarioConfig& cfg, int count) {
    Scenario s;
    s.arena = cfg.arena;
    s.seed = cfg.seed;
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        const char* failed = "min_separation (starts)";
        for (int attempt = 0; attempt < cfg.placement_attempts && !placed; ++attempt) {
            const Vec2 start = uniform_point(rng, cfg.arena);
            if (!separated(s.starts, start, cfg.min_separation)) {
                failed = "min_separation (starts)";
                continue;
            }
            const Vec2 dest = uniform_point(rng, cfg.arena);
            if ((dest - start).norm() < cfg.min_route_length) {
                failed = "min_route_length";
                continue;
            }
            if (!separated(s.destinations, dest, cfg.min_separation)) {
                failed = "min_separation (destinations)";
                continue;
            }
            s.starts.push_back(start);
            s.destinations.push_back(dest);
            placed = true;
        }
        if (!placed) {
            throw ContractViolation("generate_scenario: could not place agent " + std::to_string(i) +
                                    " of " + std::to_string(count) + ": " + failed);
        }
    }
    return s;
}

Scenario generate_scenario(Rng& rng, const ScenarioConfig& cfg) {
    constexpr int kCountRetries = 20;
    for (int retry = 0;; ++retry) {
        const int n = cfg.fixed_agents > 0 ? cfg.fixed_agents : sample_agent_count(rng, cfg);
        try {
            return place_agents(rng, cfg, n);
        } catch (const ContractViolation&) {
            if (cfg.fixed_agents > 0 || retry + 1 >= kCountRetries) throw;
        }
    }
}

Scenario scenario_at(const ScenarioConfig& cfg, std::uint64_t index) {
    Rng rng(derive_seed(cfg.seed, index));
    Scenario s = generate_scenario(rng, cfg);
    s.seed = cfg.seed;
    return s;
}

nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;
    j["seed"] = s.seed;
    j["arena"] = {s.arena.x_min, s.arena.y_min, s.arena.x_max, s.arena.y_max};
    auto& agents = j["agents"] = nlohmann::json::array();
    for (std::size_t i = 0; i < s.starts.size(); ++i) {
        agents.push_back({{"start", {s.starts[i].x(), s.starts[i].y()}},
                          {"destination", {s.destinations[i].x(), s.destinations[i].y()}}});
    }
    return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        Scenario s;
        s.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("arena")) {
            const auto& a = j.at("arena");
            s.arena = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(),
                       a.at(3).get<double>()};
        }
        for (const auto& agent : j.at("agents")) {
            const auto& st = agent.at("start");
            const auto& de = agent.at("destination");
            s.starts.emplace_back(st.at(0).get<double>(), st.at(1).get<double>());
            s.destinations.emplace_back(de.at(0).get<double>(), de.at(1).get<double>());
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario", e.what());
    }
}

void save_scenario(const std::string& path, const Scenario& s) {
    std::ofstream out(path);
    if (!out) throw ConfigError(path, "cannot open for writing");
    out << to_json(s).dump(2) << '\n';
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open scenario file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path, e.what());
    }
    return scenario_from_json(j);
}

}  // namespace swarmnav
