#pragma once

// Polar occupancy-grid encoder: the fixed-size baseline the recurrent encoder
// is compared against.

#include "swarmnav/sim.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>

namespace swarmnav {

class Network;

/// Binary polar grid, radial-major: bins[r * angular + a].
/// Angular bin 0 starts at bearing -pi; radial bin 0 starts at distance 0.
struct OccupancyGrid {
    Eigen::VectorXd bins;
    double r_max = 30.0;
    int radial = 8;
    int angular = 25;

    double at(int r, int a) const { return bins[r * angular + a]; }
};

struct GridCell {
    int radial = 0;
    int angular = 0;
};

/// Cell of a neighbor, or nothing if it lies at or beyond r_max.
std::optional<GridCell> occupancy_cell(const ObservationTuple& t, double r_max, int radial = 8,
                                       int angular = 25) noexcept;

/// Marks each neighbor within r_max; relative heading is ignored.
OccupancyGrid encode_occupancy(std::span<const ObservationTuple> neighbors, double r_max,
                               int radial = 8, int angular = 25);

/// Mean action of an occupancy-encoder policy network for a pre-built grid.
Eigen::Vector2d baseline_policy_forward(const OccupancyGrid& grid, double bearing_to_destination,
                                        const Network& policy);

}  // namespace swarmnav
