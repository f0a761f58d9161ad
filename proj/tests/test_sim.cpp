#include "swarmnav/error.hpp"
#include "swarmnav/rng.hpp"
#include "swarmnav/sim.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace swarmnav;

namespace {

constexpr double kPi = std::numbers::pi;

AgentState agent(Vec2 pos, Vec2 vel, Vec2 dest) {
    AgentState a;
    a.position = pos;
    a.velocity = vel;
    a.heading = std::atan2(vel.y(), vel.x());
    a.destination = dest;
    return a;
}

WorldState random_world(Rng& rng, int n) {
    WorldState w;
    for (int i = 0; i < n; ++i) {
        Vec2 p(rng.uniform(-30, 30), rng.uniform(-30, 30));
        Vec2 v(rng.uniform(-2, 2), rng.uniform(-2, 2));
        Vec2 d(rng.uniform(-30, 30), rng.uniform(-30, 30));
        w.agents.push_back(agent(p, v, d));
    }
    return w;
}

void expect_same_observation(const EgoObservation& a, const EgoObservation& b, double tol) {
    ASSERT_EQ(a.neighbors.size(), b.neighbors.size());
    EXPECT_NEAR(wrap_angle(a.bearing_to_destination - b.bearing_to_destination), 0.0, tol);
    for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
        EXPECT_NEAR(a.neighbors[k].distance, b.neighbors[k].distance, tol);
        EXPECT_NEAR(wrap_angle(a.neighbors[k].bearing_to_other - b.neighbors[k].bearing_to_other), 0.0, tol);
        EXPECT_NEAR(
            wrap_angle(a.neighbors[k].other_relative_heading - b.neighbors[k].other_relative_heading), 0.0,
            tol);
    }
}

}  // namespace

TEST(WrapAngle, RangeIsHalfOpen) {
    EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
    EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
    EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
    EXPECT_NEAR(wrap_angle(0.5 - 4 * kPi), 0.5, 1e-12);
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double a = wrap_angle(rng.uniform(-50, 50));
        EXPECT_GT(a, -kPi);
        EXPECT_LE(a, kPi);
    }
}

TEST(BodyFrame, RightOfNorthIsEast) {
    const Vec2 w = body_to_world(0.0, Vec2(0, 1));
    EXPECT_NEAR(w.x(), 0.0, 1e-15);
    EXPECT_NEAR(w.y(), 1.0, 1e-15);
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
        const double h = rng.uniform(-kPi, kPi);
        const Vec2 b(rng.uniform(-3, 3), rng.uniform(-3, 3));
        EXPECT_LT((world_to_body(h, body_to_world(h, b)) - b).norm(), 1e-12);
    }
}

TEST(Step, EulerOneAxis) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {50, 50}));
    const Vec2 a(1, 0);
    SimConfig cfg;
    const WorldState n = step(w, std::span<const Vec2>(&a, 1), cfg);
    EXPECT_NEAR(n.agents[0].position.x(), 0.1, 1e-15);
    EXPECT_NEAR(n.agents[0].position.y(), 0.0, 1e-15);
    EXPECT_EQ(n.step_count, 1);
}

TEST(Step, ZeroVelocityKeepsPositionAndHeading) {
    WorldState w;
    w.agents.push_back(agent({3, -2}, {0, 0}, {50, 50}));
    w.agents[0].heading = 0.7;
    const Vec2 a(0, 0);
    for (double dt : {0.01, 0.1, 2.0}) {
        SimConfig cfg;
        cfg.dt = dt;
        const WorldState n = step(w, std::span<const Vec2>(&a, 1), cfg);
        EXPECT_EQ(n.agents[0].position, w.agents[0].position);
        EXPECT_EQ(n.agents[0].heading, 0.7);
    }
}

TEST(Step, DiagonalHandEvaluation) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {50, 50}));
    const Vec2 a(1, 1);
    SimConfig cfg;
    cfg.dt = 0.5;
    const WorldState n = step(w, std::span<const Vec2>(&a, 1), cfg);
    EXPECT_NEAR(n.agents[0].position.x(), 0.5, 1e-15);
    EXPECT_NEAR(n.agents[0].position.y(), 0.5, 1e-15);
    EXPECT_NEAR(n.agents[0].heading, kPi / 4, 1e-15);
    EXPECT_EQ(n.agents[0].velocity, a);
}

TEST(Step, ClipsToMaxSpeed) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {50, 50}));
    const Vec2 a(3, 4);
    SimConfig cfg;
    const WorldState n = step(w, std::span<const Vec2>(&a, 1), cfg);
    EXPECT_NEAR(n.agents[0].velocity.norm(), cfg.v_max, 1e-12);
    EXPECT_NEAR(n.agents[0].heading, std::atan2(4.0, 3.0), 1e-12);
}

TEST(Step, Errors) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {50, 50}));
    w.agents.push_back(agent({10, 0}, {0, 0}, {50, 50}));
    SimConfig cfg;
    std::vector<Vec2> one{Vec2(1, 0)};
    EXPECT_THROW(step(w, one, cfg), ContractViolation);
    std::vector<Vec2> bad{Vec2(1, 0), Vec2(std::nan(""), 0)};
    EXPECT_THROW(step(w, bad, cfg), ContractViolation);
    std::vector<Vec2> inf{Vec2(1, 0), Vec2(0, INFINITY)};
    EXPECT_THROW(step(w, inf, cfg), ContractViolation);
    std::vector<Vec2> ok{Vec2(1, 0), Vec2(0, 1)};
    cfg.dt = 0.0;
    EXPECT_THROW(step(w, ok, cfg), ContractViolation);
}

TEST(Step, EulerExactnessOverManySteps) {
    WorldState w;
    w.agents.push_back(agent({1.5, -7.25}, {0, 0}, {1e6, 1e6}));
    const Vec2 a(1.3, -0.6);
    SimConfig cfg;
    const int n = 500;
    for (int k = 0; k < n; ++k) w = step(w, std::span<const Vec2>(&a, 1), cfg);
    const Vec2 expected = Vec2(1.5, -7.25) + n * cfg.dt * a;
    const double travelled = (n * cfg.dt * a).norm();
    EXPECT_LE((w.agents[0].position - expected).norm(), n * 1e-12 * std::max(1.0, travelled));
    EXPECT_NEAR(w.time, n * cfg.dt, 1e-12);
}

TEST(Step, ArrivalIsAbsorbing) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {3, 0}));
    w.agents.push_back(agent({20, 20}, {0, 0}, {-20, 20}));
    SimConfig cfg;
    std::vector<Vec2> a{Vec2(2, 0), Vec2(0, -1)};
    bool seen = false;
    Vec2 frozen;
    for (int k = 0; k < 100; ++k) {
        w = step(w, a, cfg);
        if (seen) {
            EXPECT_TRUE(w.agents[0].arrived);
            EXPECT_EQ(w.agents[0].position, frozen);
        } else if (w.agents[0].arrived) {
            seen = true;
            frozen = w.agents[0].position;
            EXPECT_LE((frozen - w.agents[0].destination).norm(), cfg.arrival_radius);
        }
    }
    EXPECT_TRUE(seen);
    EXPECT_EQ(w.active_count(), 1u);
}

TEST(Observe, CollinearAhead) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {1, 0}, {50, 0}));
    w.agents.push_back(agent({10, 0}, {1, 0}, {50, 5}));
    const EgoObservation o = observe(w, 0);
    ASSERT_EQ(o.neighbors.size(), 1u);
    EXPECT_DOUBLE_EQ(o.neighbors[0].distance, 10.0);
    EXPECT_DOUBLE_EQ(o.neighbors[0].bearing_to_other, 0.0);
}

TEST(Observe, PerpendicularDestination) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {1, 0}, {0, -10}));
    EXPECT_NEAR(std::abs(observe(w, 0).bearing_to_destination), kPi / 2, 1e-15);
}

TEST(Observe, ClockwiseConvention) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {1, 0}, {0, 10}));
    EXPECT_NEAR(observe(w, 0).bearing_to_destination, kPi / 2, 1e-15);
    w.agents[0].destination = Vec2(0, -10);
    EXPECT_NEAR(observe(w, 0).bearing_to_destination, -kPi / 2, 1e-15);
    w.agents.push_back(agent({0, 5}, {1, 0}, {40, 40}));
    EXPECT_NEAR(observe(w, 0).neighbors[0].bearing_to_other, kPi / 2, 1e-15);
}

TEST(Observe, HeadOnConfrontation) {
    WorldState w;
    w.agents.push_back(agent({-10, 0}, {1, 0}, {30, 0}));
    w.agents.push_back(agent({10, 0}, {-1, 0}, {-30, 0}));
    for (std::size_t i : {0u, 1u}) {
        const EgoObservation o = observe(w, i);
        EXPECT_NEAR(o.neighbors[0].distance, 20.0, 1e-12);
        EXPECT_NEAR(o.neighbors[0].bearing_to_other, 0.0, 1e-12);
        EXPECT_NEAR(o.neighbors[0].other_relative_heading, 0.0, 1e-12);
    }
}

TEST(Observe, ExcludesArrivedAgentsAndRejectsArrivedEgo) {
    WorldState w;
    Rng rng(5);
    w = random_world(rng, 4);
    w.agents[2].arrived = true;
    EXPECT_EQ(observe(w, 0).neighbors.size(), 2u);
    EXPECT_THROW(observe(w, 2), ContractViolation);
    EXPECT_THROW(observe(w, 4), ContractViolation);
}

TEST(Observe, RotationAndTranslationInvariance) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const WorldState w = random_world(rng, 5);
        const double theta = rng.uniform(-kPi, kPi);
        const Vec2 shift(rng.uniform(-100, 100), rng.uniform(-100, 100));
        const Eigen::Rotation2Dd R(theta);
        WorldState rot = w, moved = w;
        for (std::size_t i = 0; i < w.agents.size(); ++i) {
            auto& a = rot.agents[i];
            a.position = R * a.position;
            a.velocity = R * a.velocity;
            a.destination = R * a.destination;
            a.heading = wrap_angle(a.heading + theta);
            moved.agents[i].position += shift;
            moved.agents[i].destination += shift;
        }
        for (std::size_t i = 0; i < w.agents.size(); ++i) {
            expect_same_observation(observe(w, i), observe(rot, i), 1e-9);
            expect_same_observation(observe(w, i), observe(moved, i), 1e-9);
        }
    }
}

TEST(MakeWorld, HeadsTowardDestination) {
    std::vector<Vec2> s{Vec2(0, 0), Vec2(10, 10)};
    std::vector<Vec2> d{Vec2(0, 10), Vec2(0, 10)};
    const WorldState w = make_world(s, d, Rect{});
    EXPECT_NEAR(w.agents[0].heading, kPi / 2, 1e-15);
    EXPECT_NEAR(w.agents[1].heading, kPi, 1e-15);
    EXPECT_NEAR(observe(w, 0).bearing_to_destination, 0.0, 1e-15);
    EXPECT_EQ(w.agents[0].velocity, Vec2::Zero());
}

TEST(EpisodeDone, Reasons) {
    WorldState w;
    w.agents.push_back(agent({0, 0}, {0, 0}, {50, 0}));
    w.agents.push_back(agent({9, 0}, {0, 0}, {50, 9}));
    w.step_count = 5;
    EXPECT_FALSE(episode_done(w, 10).done);
    EXPECT_EQ(episode_done(w, 10).reason, DoneReason::NotDone);
    w.agents[0].arrived = true;
    w.step_count = 10;
    EXPECT_TRUE(episode_done(w, 10).done);
    EXPECT_EQ(episode_done(w, 10).reason, DoneReason::Timeout);
    w.agents[1].arrived = true;
    EXPECT_EQ(episode_done(w, 10).reason, DoneReason::AllArrived);
}

TEST(TrackWriter, OneRowPerAgentPerStep) {
    std::ostringstream os;
    TrackWriter tw(os);
    WorldState w;
    w.agents.push_back(agent({1, 2}, {0.5, 0}, {50, 0}));
    w.agents.push_back(agent({3, 4}, {0, 0}, {50, 9}));
    tw.write(7, w);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "episode,step,time_s,agent_id,x_m,y_m,vx,vy,arrived");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        EXPECT_EQ(line.rfind("7,0,", 0), 0u);
    }
    EXPECT_EQ(rows, 2);
}
