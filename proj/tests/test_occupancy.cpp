#include "swarmnav/network.hpp"
#include "swarmnav/occupancy.hpp"
#include "swarmnav/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

using namespace swarmnav;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<ObservationTuple> random_neighbors(Rng& rng, int n) {
    std::vector<ObservationTuple> v;
    for (int k = 0; k < n; ++k) {
        v.push_back({rng.uniform(0.0, 45.0), rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi)});
    }
    return v;
}
}  // namespace

TEST(Occupancy, EmptyGrid) {
    const OccupancyGrid g = encode_occupancy({}, 30.0);
    EXPECT_EQ(g.bins.size(), 200);
    EXPECT_EQ(g.bins.sum(), 0.0);
}

TEST(Occupancy, DeadAheadCell) {
    std::vector<ObservationTuple> nb{{1e-9, 0.0, 1.0}};
    const OccupancyGrid g = encode_occupancy(nb, 30.0);
    EXPECT_EQ(g.bins.sum(), 1.0);
    EXPECT_EQ(g.at(0, 12), 1.0);
    const auto c = occupancy_cell(nb[0], 30.0);
    ASSERT_TRUE(c.has_value());
    EXPECT_EQ(c->radial, 0);
    EXPECT_EQ(c->angular, 12);
}

TEST(Occupancy, BinaryMarks) {
    std::vector<ObservationTuple> nb{{10.0, 0.5, 0.0}, {10.1, 0.51, 2.0}};
    const OccupancyGrid g = encode_occupancy(nb, 30.0);
    EXPECT_EQ(g.bins.maxCoeff(), 1.0);
    EXPECT_EQ(g.bins.sum(), 1.0);
}

TEST(Occupancy, OutOfRangeSetsNothing) {
    std::vector<ObservationTuple> nb{{30.0, 0.0, 0.0}, {44.0, 1.0, 0.0}};
    EXPECT_EQ(encode_occupancy(nb, 30.0).bins.sum(), 0.0);
    EXPECT_FALSE(occupancy_cell(nb[0], 30.0).has_value());
    EXPECT_TRUE(occupancy_cell({29.999, kPi, 0.0}, 30.0).has_value());
}

TEST(Occupancy, HeadingIgnored) {
    std::vector<ObservationTuple> a{{7.0, -1.0, 0.3}}, b{{7.0, -1.0, -2.9}};
    EXPECT_EQ(encode_occupancy(a, 30.0).bins, encode_occupancy(b, 30.0).bins);
}

TEST(Occupancy, BoundsEntriesAndPermutationInvariance) {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        auto nb = random_neighbors(rng, 1 + int(rng.below(8)));
        for (const auto& t : nb) {
            const auto c = occupancy_cell(t, 30.0);
            if (t.distance < 30.0) {
                ASSERT_TRUE(c.has_value());
                EXPECT_GE(c->radial, 0);
                EXPECT_LT(c->radial, 8);
                EXPECT_GE(c->angular, 0);
                EXPECT_LT(c->angular, 25);
            } else {
                EXPECT_FALSE(c.has_value());
            }
        }
        const OccupancyGrid g = encode_occupancy(nb, 30.0);
        EXPECT_TRUE(g.bins.unaryExpr([](double x) { return double(x == 0.0 || x == 1.0); }).all());
        std::reverse(nb.begin(), nb.end());
        std::rotate(nb.begin(), nb.begin() + nb.size() / 2, nb.end());
        EXPECT_EQ(encode_occupancy(nb, 30.0).bins, g.bins);
    }
}

TEST(Occupancy, GridFarWiderThanLstmState) {
    const NetworkDims occ = NetworkDims::policy(EncoderKind::Occupancy);
    const NetworkDims lstm = NetworkDims::policy(EncoderKind::Lstm);
    EXPECT_EQ(occ.encoding_width(), 200);
    EXPECT_EQ(occ.mlp_input(), 201);
    EXPECT_GT(occ.encoding_width(), 3 * lstm.encoding_width());
}

TEST(BaselinePolicy, ZeroWeightsGiveBias) {
    Network net(NetworkDims::policy(EncoderKind::Occupancy));
    net.params().setZero();
    net.b3() << -0.4, 1.5;
    Rng rng(32);
    const auto g = encode_occupancy(random_neighbors(rng, 4), 30.0);
    EXPECT_EQ(baseline_policy_forward(g, 0.3, net), Eigen::Vector2d(-0.4, 1.5));
}

TEST(BaselinePolicy, MatchesGenericForward) {
    Rng rng(33);
    Network net(NetworkDims::policy(EncoderKind::Occupancy));
    initialize(net, rng);
    EgoObservation obs;
    obs.neighbors = random_neighbors(rng, 5);
    obs.bearing_to_destination = 0.9;
    const auto g = encode_occupancy(obs.neighbors, 30.0);
    const Eigen::Vector2d a = baseline_policy_forward(g, 0.9, net);
    EXPECT_LT((a - policy_forward(net, obs, InputScaling{})).norm(), 1e-15);

    const OccupancyGrid empty = encode_occupancy({}, 30.0);
    EgoObservation solo;
    EXPECT_EQ(baseline_policy_forward(empty, 0.0, net), policy_forward(net, solo, InputScaling{}));
}
