#include "swarmnav/checkpoint.hpp"
#include "swarmnav/config.hpp"
#include "swarmnav/error.hpp"
#include "swarmnav/eval.hpp"
#include "swarmnav/occupancy.hpp"
#include "swarmnav/ppo.hpp"
#include "swarmnav/rewards.hpp"
#include "swarmnav/run.hpp"
#include "swarmnav/scenario.hpp"
#include "swarmnav/sim.hpp"

#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace swarmnav;

namespace {

py::dict metrics_dict(const IterationMetrics& m) {
    py::dict d;
    d["iteration"] = m.iteration;
    d["episodes_seen"] = m.episodes_seen;
    d["mean_reward"] = m.mean_reward;
    d["arrival_rate"] = m.arrival_rate;
    d["collision_events"] = m.collision_events;
    d["mean_abs_dv"] = m.mean_abs_dv;
    d["policy_loss"] = m.policy_loss;
    d["value_loss"] = m.value_loss;
    d["clip_fraction"] = m.clip_fraction;
    return d;
}

py::dict eval_dict(const EvalMetrics& m) {
    return py::module_::import("json").attr("loads")(m.to_json().dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multi-agent collision avoidance: simulator, networks, PPO training and evaluation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

    // -- geometry and simulation
    py::class_<Rect>(m, "Rect")
        .def(py::init([](double x0, double y0, double x1, double y1) { return Rect{x0, y0, x1, y1}; }),
             py::arg("x_min") = -30.0, py::arg("y_min") = -30.0, py::arg("x_max") = 30.0, py::arg("y_max") = 30.0)
        .def_readwrite("x_min", &Rect::x_min)
        .def_readwrite("y_min", &Rect::y_min)
        .def_readwrite("x_max", &Rect::x_max)
        .def_readwrite("y_max", &Rect::y_max)
        .def("scaled", &Rect::scaled);

    py::class_<AgentState>(m, "AgentState")
        .def(py::init<>())
        .def_readwrite("position", &AgentState::position)
        .def_readwrite("velocity", &AgentState::velocity)
        .def_readwrite("heading", &AgentState::heading)
        .def_readwrite("destination", &AgentState::destination)
        .def_readwrite("arrived", &AgentState::arrived);

    py::class_<WorldState>(m, "WorldState")
        .def(py::init<>())
        .def_readwrite("agents", &WorldState::agents)
        .def_readwrite("time", &WorldState::time)
        .def_readwrite("step_count", &WorldState::step_count)
        .def_readwrite("bounds", &WorldState::bounds)
        .def("active_count", &WorldState::active_count);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("v_max", &SimConfig::v_max)
        .def_readwrite("arrival_radius", &SimConfig::arrival_radius);

    py::class_<ObservationTuple>(m, "ObservationTuple")
        .def(py::init([](double d, double b, double h) { return ObservationTuple{d, b, h}; }),
             py::arg("distance"), py::arg("bearing_to_other"), py::arg("other_relative_heading"))
        .def_readwrite("distance", &ObservationTuple::distance)
        .def_readwrite("bearing_to_other", &ObservationTuple::bearing_to_other)
        .def_readwrite("other_relative_heading", &ObservationTuple::other_relative_heading);

    py::class_<EgoObservation>(m, "EgoObservation")
        .def(py::init<>())
        .def_readwrite("neighbors", &EgoObservation::neighbors)
        .def_readwrite("bearing_to_destination", &EgoObservation::bearing_to_destination);

    m.def("wrap_angle", &wrap_angle, "Wrap an angle to (-pi, pi]");
    m.def(
        "make_world",
        [](const std::vector<Vec2>& starts, const std::vector<Vec2>& dests, const Rect& bounds) {
            return make_world(starts, dests, bounds);
        },
        py::arg("starts"), py::arg("destinations"), py::arg("bounds") = Rect{});
    m.def(
        "step",
        [](const WorldState& w, const std::vector<Vec2>& actions, const SimConfig& cfg) {
            return step(w, actions, cfg);
        },
        py::arg("world"), py::arg("actions"), py::arg("config") = SimConfig{},
        "One Euler step with world-frame commanded velocities");
    m.def("observe", &observe, py::arg("world"), py::arg("ego_index"));

    // -- rewards
    py::class_<RewardConfig>(m, "RewardConfig")
        .def(py::init<>())
        .def_readwrite("eps_arr", &RewardConfig::eps_arr)
        .def_readwrite("eps_cav", &RewardConfig::eps_cav)
        .def_readwrite("delta_cav", &RewardConfig::delta_cav)
        .def_readwrite("arrival", &RewardConfig::arrival)
        .def_readwrite("collision", &RewardConfig::collision)
        .def_readwrite("time_total", &RewardConfig::time_total)
        .def("validate", &RewardConfig::validate);
    m.def("arrival_reward", &arrival_reward, py::arg("distance"), py::arg("config") = RewardConfig{});
    m.def("pair_collision_reward", &pair_collision_reward, py::arg("distance"), py::arg("config") = RewardConfig{});
    m.def("time_reward", &time_reward, py::arg("route_length"), py::arg("config") = RewardConfig{},
          py::arg("dt") = 0.1, py::arg("v_max") = 2.0);
    m.def("acceleration_reward", &acceleration_reward, py::arg("prev_velocity"), py::arg("new_velocity"),
          py::arg("dt") = 0.1);

    // -- networks
    py::enum_<EncoderKind>(m, "EncoderKind").value("LSTM", EncoderKind::Lstm).value("OCCUPANCY", EncoderKind::Occupancy);

    py::class_<NetworkDims>(m, "NetworkDims")
        .def_static("policy", &NetworkDims::policy, py::arg("encoder") = EncoderKind::Lstm, py::arg("hidden") = 63)
        .def_static("value", &NetworkDims::value, py::arg("encoder") = EncoderKind::Lstm, py::arg("hidden") = 63)
        .def_readwrite("encoder", &NetworkDims::encoder)
        .def_readwrite("hidden", &NetworkDims::hidden)
        .def_readwrite("layer1", &NetworkDims::layer1)
        .def_readwrite("layer2", &NetworkDims::layer2)
        .def_readwrite("outputs", &NetworkDims::outputs)
        .def(py::self == py::self)
        .def("__repr__", [](const NetworkDims& d) { return "NetworkDims(" + describe(d) + ")"; });

    py::class_<InputScaling>(m, "InputScaling")
        .def(py::init<>())
        .def_readwrite("distance", &InputScaling::distance)
        .def_readwrite("r_max", &InputScaling::r_max);

    py::class_<Network>(m, "Network")
        .def(py::init<const NetworkDims&>())
        .def_property_readonly("dims", &Network::dims)
        .def_property(
            "params", [](const Network& n) { return Eigen::VectorXd(n.params()); },
            [](Network& n, const Eigen::VectorXd& p) {
                if (p.size() != n.params().size()) throw ContractViolation("params: wrong length");
                n.params() = p;
            })
        .def(
            "initialize",
            [](Network& n, std::uint64_t seed, double forward_bias) {
                Rng rng(seed);
                InitOptions o;
                o.forward_bias = forward_bias;
                initialize(n, rng, o);
            },
            py::arg("seed"), py::arg("forward_bias") = 0.0);

    m.def(
        "policy_forward",
        [](const Network& p, const EgoObservation& o, const InputScaling& s) { return policy_forward(p, o, s); },
        py::arg("policy"), py::arg("observation"),
          py::arg("scaling") = InputScaling{}, "Mean body-frame (forward, right) command");
    m.def(
        "value_forward",
        [](const Network& v, const EgoObservation& o, const InputScaling& s) { return value_forward(v, o, s); },
        py::arg("value"), py::arg("observation"), py::arg("scaling") = InputScaling{});
    m.def(
        "count_flops",
        [](std::int64_t n, int hidden, int layer1, int layer2) {
            NetworkDims d = NetworkDims::policy(EncoderKind::Lstm, hidden);
            d.layer1 = layer1;
            d.layer2 = layer2;
            return count_flops(n, d);
        },
        py::arg("agents"), py::arg("hidden") = 63, py::arg("layer1") = 64, py::arg("layer2") = 64);
    m.def(
        "encode_occupancy",
        [](const std::vector<ObservationTuple>& nb, double r_max) {
            const OccupancyGrid g = encode_occupancy(nb, r_max);
            Eigen::MatrixXd out(g.radial, g.angular);
            for (int r = 0; r < g.radial; ++r)
                for (int a = 0; a < g.angular; ++a) out(r, a) = g.at(r, a);
            return out;
        },
        py::arg("neighbors"), py::arg("r_max") = 30.0);

    // -- scenarios
    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("p_geo", &ScenarioConfig::p_geo)
        .def_readwrite("max_agents", &ScenarioConfig::max_agents)
        .def_readwrite("fixed_agents", &ScenarioConfig::fixed_agents)
        .def_readwrite("arena", &ScenarioConfig::arena)
        .def_readwrite("min_separation", &ScenarioConfig::min_separation)
        .def_readwrite("seed", &ScenarioConfig::seed);
    py::class_<Scenario>(m, "Scenario")
        .def_readonly("starts", &Scenario::starts)
        .def_readonly("destinations", &Scenario::destinations)
        .def_readonly("arena", &Scenario::arena)
        .def("world", &Scenario::world);
    m.def("geometric_pmf", &geometric_pmf, py::arg("n"), py::arg("p"));
    m.def("scenario_at", &scenario_at, py::arg("config"), py::arg("index"));

    // -- training
    py::class_<EnvConfig>(m, "EnvConfig")
        .def(py::init<>())
        .def_readwrite("sim", &EnvConfig::sim)
        .def_readwrite("reward", &EnvConfig::reward)
        .def_readwrite("max_steps", &EnvConfig::max_steps)
        .def_readwrite("scaling", &EnvConfig::scaling);
    py::class_<PpoConfig>(m, "PpoConfig")
        .def(py::init<>())
        .def_readwrite("gamma", &PpoConfig::gamma)
        .def_readwrite("clip_eps", &PpoConfig::clip_eps)
        .def_readwrite("epochs", &PpoConfig::epochs)
        .def_readwrite("minibatch", &PpoConfig::minibatch)
        .def_readwrite("rollout_episodes", &PpoConfig::rollout_episodes)
        .def_readwrite("lr", &PpoConfig::lr)
        .def_readwrite("reward_scale", &PpoConfig::reward_scale);
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("ppo", &TrainConfig::ppo)
        .def_readwrite("env", &TrainConfig::env)
        .def_readwrite("scenario", &TrainConfig::scenario)
        .def_readwrite("policy_dims", &TrainConfig::policy_dims)
        .def_readwrite("value_dims", &TrainConfig::value_dims)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("total_episodes", &TrainConfig::total_episodes)
        .def_readwrite("workers", &TrainConfig::workers)
        .def("validate", &TrainConfig::validate);
    py::class_<RunConfig>(m, "RunConfig")
        .def_readwrite("train", &RunConfig::train)
        .def_readwrite("output_root", &RunConfig::output_root)
        .def_readwrite("checkpoint_every", &RunConfig::checkpoint_every)
        .def("hash", [](const RunConfig& c) { return config_hash(c); });
    m.def("load_run_config", &load_run_config, py::arg("path"));
    m.def(
        "parse_run_config",
        [](const std::string& text) { return run_config_from_tree(parse_toml(text, "<string>")); },
        py::arg("text"));

    py::class_<TrainState>(m, "TrainState")
        .def_readonly("policy", &TrainState::policy)
        .def_readonly("value", &TrainState::value)
        .def_readonly("iteration", &TrainState::iteration)
        .def_readonly("episodes_seen", &TrainState::episodes_seen);
    m.def("init_train_state", &init_train_state, py::arg("config"));
    m.def(
        "train_iteration",
        [](TrainState& s, const TrainConfig& c) {
            py::gil_scoped_release release;
            const IterationMetrics it = train_iteration(s, c);
            py::gil_scoped_acquire acquire;
            return metrics_dict(it);
        },
        py::arg("state"), py::arg("config"), "One collect / update cycle; returns its metrics");

    // -- checkpoints and evaluation
    m.def(
        "load_policy",
        [](const std::string& path) { return find_role(load_checkpoint(path).nets, NetworkRole::Policy).net; },
        py::arg("path"), "Policy network from a checkpoint or export file");
    m.def(
        "export_policy",
        [](const Network& policy, const std::string& path) {
            write_parameters(path, {{NetworkRole::Policy, policy, std::nullopt}}, Precision::Single);
        },
        py::arg("policy"), py::arg("path"), "Single-precision weight file");
    m.def(
        "evaluate",
        [](const Network& policy, const ScenarioConfig& sc, const EnvConfig& env, std::int64_t episodes,
           bool deterministic, std::uint64_t seed) {
            std::vector<EpisodeStats> stats;
            {
                py::gil_scoped_release release;
                stats = evaluate_policy(policy, sc, env, episodes, deterministic, seed);
            }
            return eval_dict(summarize(stats));
        },
        py::arg("policy"), py::arg("scenarios") = ScenarioConfig{}, py::arg("env") = EnvConfig{},
        py::arg("episodes") = 10, py::arg("deterministic") = true, py::arg("seed") = 0);
    m.def(
        "commanded_angle_map",
        [](const Network& policy, const std::string& preset, double resolution, double extent) {
            HeatmapSpec spec = heatmap_preset(preset);
            spec.resolution = resolution;
            spec.bounds = Rect{-extent, -extent, extent, extent};
            const Heatmap h = commanded_angle_map(policy, spec, InputScaling{});
            return py::make_tuple(h.delta_deg, h.xs, h.ys);
        },
        py::arg("policy"), py::arg("preset") = "head_on", py::arg("resolution") = 0.5, py::arg("extent") = 30.0,
        "Returns (delta_deg[x, y], xs, ys)");
}
