#include "swarmnav/occupancy.hpp"

#include "swarmnav/error.hpp"
#include "swarmnav/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace swarmnav {

std::optional<GridCell> occupancy_cell(const ObservationTuple& t, double r_max, int radial,
                                       int angular) noexcept {
    if (!(t.distance < r_max)) return std::nullopt;
    const double pi = std::numbers::pi;
    GridCell cell;
    cell.radial = std::clamp(static_cast<int>(std::floor(t.distance / (r_max / radial))), 0, radial - 1);
    // bearing is in (-pi, pi]; +pi lands on the upper edge and is folded into the last bin
    cell.angular = std::clamp(static_cast<int>(std::floor((t.bearing_to_other + pi) / (2.0 * pi / angular))),
                              0, angular - 1);
    return cell;
}

OccupancyGrid encode_occupancy(std::span<const ObservationTuple> neighbors, double r_max, int radial,
                               int angular) {
    if (!(r_max > 0.0)) throw ContractViolation("encode_occupancy: r_max must be positive");
    OccupancyGrid grid;
    grid.r_max = r_max;
    grid.radial = radial;
    grid.angular = angular;
    grid.bins = Eigen::VectorXd::Zero(radial * angular);
    for (const auto& t : neighbors) {
        if (auto cell = occupancy_cell(t, r_max, radial, angular)) {
            grid.bins[cell->radial * angular + cell->angular] = 1.0;
        }
    }
    return grid;
}

Eigen::Vector2d baseline_policy_forward(const OccupancyGrid& grid, double bearing_to_destination,
                                        const Network& policy) {
    const auto& d = policy.dims();
    if (d.encoder != EncoderKind::Occupancy || d.outputs != 2) {
        throw ContractViolation("baseline_policy_forward: expected an occupancy policy network");
    }
    NetworkInput in;
    in.grid = grid.bins;
    in.bearing = bearing_to_destination / std::numbers::pi;
    return forward(policy, in);
}

}  // namespace swarmnav
