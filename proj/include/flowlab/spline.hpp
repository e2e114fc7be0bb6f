#pragma once

#include <span>
#include <vector>

namespace flowlab {

/// Natural cubic spline through (knots[j], values[j]) with constant
/// extrapolation outside [knots.front(), knots.back()].
///
/// Knots must be strictly increasing. A single knot yields a constant.
class NaturalCubicSpline {
public:
    NaturalCubicSpline() = default;
    NaturalCubicSpline(std::vector<double> knots, std::vector<double> values);

    double operator()(double x) const;
    /// First derivative; zero in the constant extrapolation regions.
    double derivative(double x) const;

    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::size_t interval(double x) const;

    std::vector<double> knots_;
    std::vector<double> values_;
    std::vector<double> second_;  // second derivatives at the knots
};

}  // namespace flowlab
