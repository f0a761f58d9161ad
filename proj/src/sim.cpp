#include "swarmnav/sim.hpp"

#include "swarmnav/error.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

namespace swarmnav {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

double wrap_angle(double a) noexcept {
    double r = std::remainder(a, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    if (r > kPi) r -= kTwoPi;
    return r;
}

Vec2 body_to_world(double heading, const Vec2& body) noexcept {
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    return {c * body.x() - s * body.y(), s * body.x() + c * body.y()};
}

Vec2 world_to_body(double heading, const Vec2& world) noexcept {
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    return {c * world.x() + s * world.y(), -s * world.x() + c * world.y()};
}

Rect Rect::scaled(double factor) const noexcept {
    const double cx = 0.5 * (x_min + x_max);
    const double cy = 0.5 * (y_min + y_max);
    const double hw = 0.5 * width() * factor;
    const double hh = 0.5 * height() * factor;
    return {cx - hw, cy - hh, cx + hw, cy + hh};
}

std::size_t WorldState::active_count() const noexcept {
    std::size_t n = 0;
    for (const auto& a : agents) n += a.arrived ? 0 : 1;
    return n;
}

WorldState make_world(std::span<const Vec2> starts, std::span<const Vec2> destinations,
                      const Rect& bounds) {
    if (starts.size() != destinations.size()) {
        throw ContractViolation("make_world: starts and destinations differ in length");
    }
    WorldState world;
    world.bounds = bounds;
    world.agents.reserve(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        AgentState a;
        a.position = starts[i];
        a.destination = destinations[i];
        const Vec2 d = destinations[i] - starts[i];
        a.heading = wrap_angle(std::atan2(d.y(), d.x()));
        world.agents.push_back(a);
    }
    return world;
}

Vec2 clip_speed(const Vec2& v, double v_max) noexcept {
    const double n = v.norm();
    if (n > v_max) return v * (v_max / n);
    return v;
}

WorldState step(const WorldState& world, std::span<const Vec2> actions, const SimConfig& cfg) {
    if (actions.size() != world.agents.size()) {
        throw ContractViolation("step: expected " + std::to_string(world.agents.size()) +
                                " actions, got " + std::to_string(actions.size()));
    }
    if (!(cfg.dt > 0.0)) throw ContractViolation("step: dt must be positive");

    WorldState next = world;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        AgentState& a = next.agents[i];
        if (a.arrived) continue;
        if (!actions[i].allFinite()) {
            throw ContractViolation("step: non-finite action for agent " + std::to_string(i));
        }
        const Vec2 v = clip_speed(actions[i], cfg.v_max);
        a.position += v * cfg.dt;
        a.velocity = v;
        if (v.squaredNorm() > 0.0) a.heading = wrap_angle(std::atan2(v.y(), v.x()));
        if ((a.destination - a.position).norm() <= cfg.arrival_radius) a.arrived = true;
    }
    next.step_count = world.step_count + 1;
    next.time = static_cast<double>(next.step_count) * cfg.dt;
    return next;
}

ObservationTuple observe_pair(const AgentState& ego, const AgentState& other) noexcept {
    const Vec2 los = other.position - ego.position;
    ObservationTuple t;
    t.distance = los.norm();
    const double los_angle = std::atan2(los.y(), los.x());
    t.bearing_to_other = wrap_angle(los_angle - ego.heading);
    // line of sight j -> i points the opposite way
    t.other_relative_heading = wrap_angle(los_angle + kPi - other.heading);
    return t;
}

EgoObservation observe(const WorldState& world, std::size_t ego_index) {
    if (ego_index >= world.agents.size()) {
        throw ContractViolation("observe: ego index " + std::to_string(ego_index) + " out of range");
    }
    const AgentState& ego = world.agents[ego_index];
    if (ego.arrived) {
        throw ContractViolation("observe: agent " + std::to_string(ego_index) + " has arrived");
    }
    EgoObservation obs;
    obs.neighbors.reserve(world.agents.size());
    for (std::size_t j = 0; j < world.agents.size(); ++j) {
        if (j == ego_index || world.agents[j].arrived) continue;
        obs.neighbors.push_back(observe_pair(ego, world.agents[j]));
    }
    const Vec2 to_dest = ego.destination - ego.position;
    obs.bearing_to_destination = wrap_angle(std::atan2(to_dest.y(), to_dest.x()) - ego.heading);
    return obs;
}

EpisodeStatus episode_done(const WorldState& world, std::int64_t max_steps) noexcept {
    if (world.active_count() == 0) return {true, DoneReason::AllArrived};
    if (world.step_count >= max_steps) return {true, DoneReason::Timeout};
    return {};
}

TrackWriter::TrackWriter(std::ostream& out) : out_(out) {
    out_ << "episode,step,time_s,agent_id,x_m,y_m,vx,vy,arrived\n";
}

void TrackWriter::write(std::int64_t episode, const WorldState& world) {
    const auto old_precision = out_.precision(10);
    for (std::size_t i = 0; i < world.agents.size(); ++i) {
        const AgentState& a = world.agents[i];
        out_ << episode << ',' << world.step_count << ',' << world.time << ',' << i << ','
             << a.position.x() << ',' << a.position.y() << ',' << a.velocity.x() << ','
             << a.velocity.y() << ',' << (a.arrived ? 1 : 0) << '\n';
    }
    out_.precision(old_precision);
}

}  // namespace swarmnav
