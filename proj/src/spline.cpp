#include "flowlab/spline.hpp"

#include <algorithm>
#include <cmath>

#include "flowlab/common.hpp"

namespace flowlab {

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    const std::size_t n = knots_.size();
    if (n == 0 || values_.size() != n) throw Error("spline: knots and values must be non-empty and equal length");
    for (std::size_t j = 0; j < n; ++j) {
        if (!std::isfinite(knots_[j]) || !std::isfinite(values_[j])) throw Error("spline: non-finite knot data");
        if (j > 0 && !(knots_[j] > knots_[j - 1])) throw Error("spline: knots must be strictly increasing");
    }
    second_.assign(n, 0.0);
    if (n < 3) return;

    // Tridiagonal system for interior second derivatives; natural ends M0 = Mn-1 = 0.
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double h0 = knots_[i + 1] - knots_[i];
        const double h1 = knots_[i + 2] - knots_[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((values_[i + 2] - values_[i + 1]) / h1 - (values_[i + 1] - values_[i]) / h0);
    }
    // Thomas algorithm; the sub-diagonal entry of row i is h0 of row i, i.e. upper[i-1].
    for (std::size_t i = 1; i < m; ++i) {
        const double w = upper[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> sol(m);
    sol[m - 1] = rhs[m - 1] / diag[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
    std::copy(sol.begin(), sol.end(), second_.begin() + 1);
}

std::size_t NaturalCubicSpline::interval(double x) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
    const auto j = static_cast<std::size_t>(it - knots_.begin());
    return std::clamp<std::size_t>(j, 1, knots_.size() - 1) - 1;
}

double NaturalCubicSpline::operator()(double x) const {
    if (knots_.size() == 1 || x <= knots_.front()) return values_.front();
    if (x >= knots_.back()) return values_.back();
    const std::size_t j = interval(x);
    const double h = knots_[j + 1] - knots_[j];
    const double a = (knots_[j + 1] - x) / h;
    const double b = 1.0 - a;
    return a * values_[j] + b * values_[j + 1] +
           ((a * a * a - a) * second_[j] + (b * b * b - b) * second_[j + 1]) * h * h / 6.0;
}

double NaturalCubicSpline::derivative(double x) const {
    if (knots_.size() == 1 || x <= knots_.front() || x >= knots_.back()) return 0.0;
    const std::size_t j = interval(x);
    const double h = knots_[j + 1] - knots_[j];
    const double a = (knots_[j + 1] - x) / h;
    const double b = 1.0 - a;
    return (values_[j + 1] - values_[j]) / h +
           (-(3.0 * a * a - 1.0) * second_[j] + (3.0 * b * b - 1.0) * second_[j + 1]) * h / 6.0;
}

}  // namespace flowlab
