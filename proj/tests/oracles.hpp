#pragma once

// Test-only reference computations. Nothing here calls into the library's
// backward pass; the gradients are recovered purely from forward evaluations.

#include "swarmnav/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>

namespace swarmnav::testing {

/// Central finite-difference gradient of a scalar function of the parameters.
inline Eigen::VectorXd finite_difference_gradient(Network& net,
                                                  const std::function<double(const Network&)>& f,
                                                  double step = 1e-5) {
    Eigen::VectorXd grad(net.params().size());
    for (Eigen::Index k = 0; k < grad.size(); ++k) {
        const double saved = net.params()[k];
        net.params()[k] = saved + step;
        const double up = f(net);
        net.params()[k] = saved - step;
        const double down = f(net);
        net.params()[k] = saved;
        grad[k] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// Max over entries of |a - n| / max(|a| + |n|, floor). With a 1e-5 step the
/// central difference carries ~1e-11 absolute round-off, so entries far below
/// the floor are compared in absolute terms against it.
inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                 double floor = 1e-4) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < analytic.size(); ++k) {
        const double denom = std::max(std::abs(analytic[k]) + std::abs(numeric[k]), floor);
        worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
    }
    return worst;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace swarmnav::testing
