#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "flowlab/densities.hpp"
#include "flowlab/grid_io.hpp"
#include "flowlab/quadrature.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/spline.hpp"

using namespace flowlab;
using std::numbers::pi;

namespace {

std::vector<double> empirical_mean(const Points& x) {
    std::vector<double> m(x.dim(), 0.0);
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t k = 0; k < x.dim(); ++k) m[k] += x(i, k);
    for (double& v : m) v /= static_cast<double>(x.count());
    return m;
}

std::vector<double> empirical_cov(const Points& x) {
    const auto m = empirical_mean(x);
    const std::size_t d = x.dim();
    std::vector<double> c(d * d, 0.0);
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) c[a * d + b] += (x(i, a) - m[a]) * (x(i, b) - m[b]);
    for (double& v : c) v /= static_cast<double>(x.count() - 1);
    return c;
}

}  // namespace

TEST_CASE("log density at known points") {
    const double origin[2] = {0.0, 0.0};
    CHECK(AnalyticDensity::standard_normal(2).log_density(origin) == doctest::Approx(-std::log(2.0 * pi)).epsilon(1e-14));

    const auto box = AnalyticDensity::box_counterexample(0.9, 0.1);
    CHECK(box.log_density(origin) == doctest::Approx(std::log(0.9)).epsilon(1e-14));
    const double far[2] = {10.0, 10.0};
    CHECK(std::isinf(box.log_density(far)));
    CHECK(box.log_density(far) < 0.0);
}

TEST_CASE("correlated gaussian matches the bivariate closed form") {
    const double rho = 0.6, s1 = 1.3, s2 = 0.7;
    const auto g = AnalyticDensity::gaussian({0.5, -1.0}, {s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2});
    for (double x : {-1.0, 0.2, 2.5}) {
        for (double y : {-2.0, 0.0, 0.7}) {
            const double u = (x - 0.5) / s1, v = (y + 1.0) / s2;
            const double q = (u * u - 2 * rho * u * v + v * v) / (1 - rho * rho);
            const double expected = -std::log(2 * pi * s1 * s2 * std::sqrt(1 - rho * rho)) - 0.5 * q;
            const double pt[2] = {x, y};
            CHECK(g.log_density(pt) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("mixture densities integrate to one") {
    for (const auto& d : {AnalyticDensity::bimodal_gmm(), AnalyticDensity::ring_mixture(20, 0.3, 1.0)}) {
        const auto q = integrate_2d([&](double x, double y) {
            const double p[2] = {x, y};
            return d.density(p);
        }, d.support_box(), 1e-9);
        CHECK(q.value == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("box normalizer integrates to one under quadrature") {
    const auto box = AnalyticDensity::box_counterexample(0.9, 0.1);
    CHECK(counterexample_mass(0.9, box.box().slope) == doctest::Approx(1.0).epsilon(1e-12));
    // Split the support along the kinks so each piece is smooth.
    const double edge = 0.5 + box.box().ramp_width();
    const double cuts[] = {-edge, -0.5, 0.0, 0.5, edge};
    double total = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            total += quadrature_mass(box, Box{{cuts[i], cuts[j]}, {cuts[i + 1], cuts[j + 1]}}, 1e-11);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(counterexample_normalizer(1.0), Error);
    CHECK_THROWS_AS(counterexample_normalizer(1.5), Error);
}

TEST_CASE("sampling is deterministic and matches moments") {
    const auto normal = AnalyticDensity::standard_normal(2);
    const auto a = normal.sample(1000, 7), b = normal.sample(1000, 7), c = normal.sample(1000, 8);
    CHECK(a.data() == b.data());
    CHECK(a.data() != c.data());

    const auto big = normal.sample(1000000, 3);
    for (double m : empirical_mean(big)) CHECK(std::abs(m) < 0.004);

    const auto gmm = AnalyticDensity::bimodal_gmm();
    const auto cov = empirical_cov(gmm.sample(100000, 4));
    const auto exact = gmm.covariance();
    CHECK(exact[0] == doctest::Approx(0.15 + 0.25));
    CHECK(exact[1] == doctest::Approx(0.25));
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(cov[k] - exact[k]) < 0.03 * std::abs(exact[k]));
}

TEST_CASE("ring radius matches radial quadrature") {
    const auto ring = AnalyticDensity::ring_mixture(20, 0.3, 1.0);
    const auto x = ring.sample(1000000, 5);
    double mean_r = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i) mean_r += std::hypot(x(i, 0), x(i, 1));
    mean_r /= static_cast<double>(x.count());
    // E|x| = int r^2 int p(r, phi) dphi dr, inner integral over one period of the ring.
    using boost::math::quadrature::gauss_kronrod;
    const double expected = gauss_kronrod<double, 61>::integrate(
        [&](double r) {
            const double inner = gauss_kronrod<double, 61>::integrate(
                [&](double phi) {
                    const double p[2] = {r * std::cos(phi), r * std::sin(phi)};
                    return ring.density(p);
                },
                0.0, 2.0 * pi, 12, 1e-12);
            return r * r * inner;
        },
        0.0, 4.0, 12, 1e-10);
    CHECK(mean_r == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("box sampler stays on the support") {
    const auto box = AnalyticDensity::box_counterexample(0.9, 0.1);
    const auto x = box.sample(20000, 1);
    std::size_t plateau = 0;
    for (std::size_t i = 0; i < x.count(); ++i) {
        CHECK(std::isfinite(box.log_density(x.row(i))));
        if (std::abs(x(i, 0)) <= 0.5 && std::abs(x(i, 1)) <= 0.5) ++plateau;
    }
    CHECK(static_cast<double>(plateau) / 20000.0 == doctest::Approx(0.9).epsilon(0.02));
}

TEST_CASE("discretization") {
    const auto gmm = AnalyticDensity::bimodal_gmm();
    const auto grid = discretize(gmm, {-2.0, -2.0}, {0.01, 0.01}, {400, 400});
    CHECK(grid.total_mass() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(grid.cell_count() == 160000);

    const auto normal = discretize(AnalyticDensity::standard_normal(2), {-5.0, -5.0}, {0.05, 0.05}, {200, 200});
    // The 4-sigma square itself holds erf(4 / sqrt 2)^2 = 0.999873; the grid window holds more than 0.9999.
    CHECK(quadrature_mass(AnalyticDensity::standard_normal(2), normal.bounds()) >= 0.9999);
        CHECK(normal.mass_in(Box{{-4.0, -4.0}, {4.0, 4.0}}) ==
          doctest::Approx(std::pow(std::erf(4.0 / std::sqrt(2.0)), 2)).epsilon(1e-6));

    // The plateau is covered by whole cells aligned with its edges.
    const auto box = discretize(AnalyticDensity::box_counterexample(), {-0.5, -0.5}, {0.1, 0.1}, {10, 10}, 0.5);
    for (double m : box.masses) CHECK(m == doctest::Approx(box.masses.front()).epsilon(1e-12));

    CHECK_THROWS_AS(discretize(gmm, {-0.5, -0.5}, {0.01, 0.01}, {50, 50}), Error);
}

TEST_CASE("grid indexing and binary round trip") {
    const auto grid = discretize(AnalyticDensity::bimodal_gmm(), {-2.0, -2.0}, {0.1, 0.1}, {40, 40});
    const std::size_t multi[2] = {3, 7};
    CHECK(grid.unflatten(grid.flatten(multi)) == std::vector<std::size_t>{3, 7});
    CHECK(grid.cell_center(grid.flatten(multi))[0] == doctest::Approx(-2.0 + 0.35));
    std::stringstream io;
    write_grid_binary(io, grid);
    const auto back = read_grid_binary(io);
    CHECK(back.masses == grid.masses);
    CHECK(back.extents == grid.extents);
    std::stringstream bad("NOTAGRID");
    CHECK_THROWS_AS(read_grid_binary(bad), Error);
}

TEST_CASE("natural spline") {
    const NaturalCubicSpline line({0.0, 1.0, 3.0, 4.0}, {1.0, 3.0, 7.0, 9.0});
    for (double x : {0.5, 2.0, 3.7}) {
        CHECK(line(x) == doctest::Approx(1.0 + 2.0 * x).epsilon(1e-13));
        CHECK(line.derivative(x) == doctest::Approx(2.0).epsilon(1e-12));
    }
    CHECK(line(0.0) == doctest::Approx(1.0));
    CHECK(line(-5.0) == doctest::Approx(1.0));
    CHECK(line.derivative(-5.0) == 0.0);
    CHECK(line(10.0) == doctest::Approx(9.0));

    // Property: interpolates random knots and has zero curvature at the ends.
    Rng rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs, ys;
        double x = 0.0;
        for (int k = 0; k < 8; ++k) {
            x += 0.1 + std::abs(u(rng));
            xs.push_back(x);
            ys.push_back(u(rng));
        }
        const NaturalCubicSpline s(xs, ys);
        for (std::size_t k = 0; k < xs.size(); ++k) CHECK(s(xs[k]) == doctest::Approx(ys[k]).epsilon(1e-12));
        // Second derivative one and two steps inside each end knot.
        const double h = 1e-6;
        const double front = (s.derivative(xs.front() + 2 * h) - s.derivative(xs.front() + h)) / h;
        const double back = (s.derivative(xs.back() - h) - s.derivative(xs.back() - 2 * h)) / h;
        CHECK(std::abs(front) < 1e-2);
        CHECK(std::abs(back) < 1e-2);
    }
    CHECK_THROWS_AS(NaturalCubicSpline({0.0, 0.0}, {1.0, 2.0}), Error);
}

TEST_CASE("quadrature agrees with an independent rule") {
    auto f = [](double x) { return std::exp(-x * x) * std::cos(3 * x); };
    const double reference = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -6.0, 6.0, 15, 1e-14);
    CHECK(integrate_1d(f, -6.0, 6.0, 1e-12).value == doctest::Approx(reference).epsilon(1e-10));
    CHECK(reference == doctest::Approx(std::sqrt(pi) * std::exp(-9.0 / 4.0)).epsilon(1e-10));
    const auto q2 = integrate_2d([](double x, double y) { return x * x * y; }, Box{{0.0, 0.0}, {1.0, 2.0}});
    CHECK(q2.value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}
