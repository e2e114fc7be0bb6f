#include "flowlab/quadrature.hpp"

#include <array>
#include <cmath>

namespace flowlab {

namespace {

constexpr std::array<double, 4> kGl4Nodes = {-0.8611363115940526, -0.3399810435848563,
                                             0.3399810435848563, 0.8611363115940526};
constexpr std::array<double, 4> kGl4Weights = {0.3478548451374538, 0.6521451548625461,
                                               0.6521451548625461, 0.3478548451374538};

constexpr std::array<double, 5> kGl5Nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                             0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGl5Weights = {0.2369268850561891, 0.4786286704993665,
                                               0.5688888888888889, 0.4786286704993665,
                                               0.2369268850561891};

struct Cell2 {
    double x0, x1, y0, y1;
};

double rule_2d(const std::function<double(double, double)>& f, const Cell2& c, std::size_t& evals) {
    const double hx = 0.5 * (c.x1 - c.x0), hy = 0.5 * (c.y1 - c.y0);
    const double mx = 0.5 * (c.x1 + c.x0), my = 0.5 * (c.y1 + c.y0);
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            sum += kGl4Weights[i] * kGl4Weights[j] * f(mx + hx * kGl4Nodes[i], my + hy * kGl4Nodes[j]);
    evals += 16;
    return sum * hx * hy;
}

void refine_2d(const std::function<double(double, double)>& f, const Cell2& c, double whole,
               double tol, int depth, QuadratureResult& out) {
    const double mx = 0.5 * (c.x0 + c.x1), my = 0.5 * (c.y0 + c.y1);
    const std::array<Cell2, 4> kids = {Cell2{c.x0, mx, c.y0, my}, Cell2{mx, c.x1, c.y0, my},
                                       Cell2{c.x0, mx, my, c.y1}, Cell2{mx, c.x1, my, c.y1}};
    std::array<double, 4> parts{};
    double split = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        parts[k] = rule_2d(f, kids[k], out.evaluations);
        split += parts[k];
    }
    const double err = std::abs(split - whole);
    if (err <= tol || depth <= 0) {
        out.value += split;
        out.error += err;
        if (depth <= 0 && err > tol) out.converged = false;
        return;
    }
    for (std::size_t k = 0; k < 4; ++k) refine_2d(f, kids[k], parts[k], 0.25 * tol, depth - 1, out);
}

double rule_1d(const std::function<double(double)>& f, double a, double b, std::size_t& evals) {
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) sum += kGl5Weights[i] * f(m + h * kGl5Nodes[i]);
    evals += 5;
    return sum * h;
}

void refine_1d(const std::function<double(double)>& f, double a, double b, double whole, double tol,
               int depth, QuadratureResult& out) {
    const double m = 0.5 * (a + b);
    const double left = rule_1d(f, a, m, out.evaluations);
    const double right = rule_1d(f, m, b, out.evaluations);
    const double err = std::abs(left + right - whole);
    if (err <= tol || depth <= 0) {
        out.value += left + right;
        out.error += err;
        if (depth <= 0 && err > tol) out.converged = false;
        return;
    }
    refine_1d(f, a, m, left, 0.5 * tol, depth - 1, out);
    refine_1d(f, m, b, right, 0.5 * tol, depth - 1, out);
}

}  // namespace

QuadratureResult integrate_2d(const std::function<double(double, double)>& f, const Box& box,
                              double tol, int max_depth) {
    if (box.dim() != 2) throw Error("integrate_2d: box must be two-dimensional");
    QuadratureResult out;
    out.converged = true;
    // Seed with an 8x8 partition so narrow features are not missed by the first rule.
    constexpr int kSeed = 8;
    const double dx = (box.upper[0] - box.lower[0]) / kSeed;
    const double dy = (box.upper[1] - box.lower[1]) / kSeed;
    for (int i = 0; i < kSeed; ++i) {
        for (int j = 0; j < kSeed; ++j) {
            const Cell2 c{box.lower[0] + i * dx, box.lower[0] + (i + 1) * dx, box.lower[1] + j * dy,
                          box.lower[1] + (j + 1) * dy};
            const double whole = rule_2d(f, c, out.evaluations);
            refine_2d(f, c, whole, tol / (kSeed * kSeed), max_depth, out);
        }
    }
    return out;
}

QuadratureResult integrate_1d(const std::function<double(double)>& f, double a, double b, double tol,
                              int max_depth) {
    QuadratureResult out;
    out.converged = true;
    constexpr int kSeed = 16;
    const double h = (b - a) / kSeed;
    for (int i = 0; i < kSeed; ++i) {
        const double lo = a + i * h, hi = a + (i + 1) * h;
        const double whole = rule_1d(f, lo, hi, out.evaluations);
        refine_1d(f, lo, hi, whole, tol / kSeed, max_depth, out);
    }
    return out;
}

double Box::volume() const {
    double v = 1.0;
    for (std::size_t k = 0; k < lower.size(); ++k) v *= upper[k] - lower[k];
    return v;
}

}  // namespace flowlab
