#pragma once

#include <functional>

#include "flowlab/common.hpp"

namespace flowlab {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};

/// Adaptive refinement on a 2D box: each cell is integrated with a 4x4
/// Gauss-Legendre rule and compared against the sum over its four children;
/// cells whose disagreement exceeds their share of `tol` are split further.
QuadratureResult integrate_2d(const std::function<double(double, double)>& f, const Box& box,
                              double tol = 1e-8, int max_depth = 14);

/// Same refinement scheme in 1D on [a, b] with a 5-point Gauss-Legendre rule.
QuadratureResult integrate_1d(const std::function<double(double)>& f, double a, double b,
                              double tol = 1e-10, int max_depth = 40);

}  // namespace flowlab
