#pragma once

// Point-mass swarm world in the horizontal plane.
//
// Frame convention: x points north, y points east (the horizontal part of
// NED). Headings and relative angles are atan2(dy, dx) differences, which are
// positive clockwise when viewed from above. "To the right" of an agent
// heading +x is therefore +y.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace swarmnav {

using Vec2 = Eigen::Vector2d;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a) noexcept;

/// Rotates a body-frame vector (forward, right) into the world frame.
Vec2 body_to_world(double heading, const Vec2& body) noexcept;
Vec2 world_to_body(double heading, const Vec2& world) noexcept;

struct Rect {
    double x_min = -30.0;
    double y_min = -30.0;
    double x_max = 30.0;
    double y_max = 30.0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    bool strictly_contains(const Vec2& p) const noexcept {
        return p.x() > x_min && p.x() < x_max && p.y() > y_min && p.y() < y_max;
    }
    Rect scaled(double factor) const noexcept;
};

struct AgentState {
    Vec2 position = Vec2::Zero();
    Vec2 velocity = Vec2::Zero();
    double heading = 0.0;
    Vec2 destination = Vec2::Zero();
    bool arrived = false;
};

struct WorldState {
    std::vector<AgentState> agents;
    double time = 0.0;
    std::int64_t step_count = 0;
    Rect bounds;

    std::size_t active_count() const noexcept;
};

struct SimConfig {
    double dt = 0.1;            // s
    double v_max = 2.0;         // m/s
    double arrival_radius = 2.0;  // m, shared with RewardConfig::eps_arr
};

struct ObservationTuple {
    double distance = 0.0;
    double bearing_to_other = 0.0;
    double other_relative_heading = 0.0;
};

struct EgoObservation {
    std::vector<ObservationTuple> neighbors;
    double bearing_to_destination = 0.0;
};

/// Places agents at their starts with zero velocity and heading toward the
/// destination.
WorldState make_world(std::span<const Vec2> starts, std::span<const Vec2> destinations,
                      const Rect& bounds);

/// Limits the magnitude of a commanded velocity to v_max, keeping direction.
Vec2 clip_speed(const Vec2& v, double v_max) noexcept;

/// One explicit Euler step with world-frame commanded velocities.
///
/// Commands longer than v_max are rescaled. Agents already arrived are left
/// untouched; an agent that ends the step inside the arrival radius is marked
/// arrived. Throws ContractViolation on a size mismatch, a non-positive dt or a
/// non-finite command.
WorldState step(const WorldState& world, std::span<const Vec2> actions, const SimConfig& cfg);

/// Relative geometry of `other` as seen from `ego`.
ObservationTuple observe_pair(const AgentState& ego, const AgentState& other) noexcept;

/// Observation of every other non-arrived agent, in agent order.
EgoObservation observe(const WorldState& world, std::size_t ego_index);

enum class DoneReason { NotDone, AllArrived, Timeout };

struct EpisodeStatus {
    bool done = false;
    DoneReason reason = DoneReason::NotDone;
};

EpisodeStatus episode_done(const WorldState& world, std::int64_t max_steps) noexcept;

/// Ground-track CSV: episode,step,time_s,agent_id,x_m,y_m,vx,vy,arrived
class TrackWriter {
public:
    explicit TrackWriter(std::ostream& out);
    void write(std::int64_t episode, const WorldState& world);

private:
    std::ostream& out_;
};

}  // namespace swarmnav
