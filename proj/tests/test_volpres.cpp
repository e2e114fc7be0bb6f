#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "doctest.h"
#include "flowlab/quadrature.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/volpres.hpp"

using namespace flowlab;
using std::numbers::pi;

namespace {

GridDensity row_grid(std::vector<double> masses) {
    GridDensity g;
    g.origin = {0.0, 0.0};
    g.spacing = {1.0, 1.0};
    g.extents = {1, masses.size()};
    g.masses = std::move(masses);
    return g;
}

double brute_force_min_kl(const std::vector<double>& p, const std::vector<double>& q) {
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        best = std::min(best, permutation_kl(p, q, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(n);
    for (double& x : v) x = e(rng);
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
    return v;
}

GridDensity bimodal_grid() {
    return discretize(AnalyticDensity::bimodal_gmm(), {-2.0, -2.0}, {0.01, 0.01}, {400, 400});
}

}  // namespace

TEST_CASE("two-cell sorted map") {
    const auto p = row_grid({0.9, 0.1}), q = row_grid({0.3, 0.7});
    const auto map = sorted_grid_map(p, q);
    CHECK(map.permutation == std::vector<std::size_t>{1, 0});
    const double expected = 0.9 * std::log(0.9 / 0.7) + 0.1 * std::log(0.1 / 0.3);
    CHECK(discrete_kl(p, q, map) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(discrete_kl(p, q, map) == doctest::Approx(0.1164).epsilon(1e-3));
    CHECK(brute_force_min_kl(p.masses, q.masses) == doctest::Approx(expected).epsilon(1e-14));

    const auto same = sorted_grid_map(p, p);
    CHECK(discrete_kl(p, p, same) == doctest::Approx(0.0));
    CHECK_THROWS_AS(sorted_grid_map(p, row_grid({0.2, 0.3, 0.5})), Error);
}

TEST_CASE("sorted map is optimal against brute force") {
    Rng rng(17);
    for (std::size_t n = 2; n <= 8; ++n) {
        const auto p = random_simplex(rng, n), q = random_simplex(rng, n);
        const auto pg = row_grid(p), qg = row_grid(q);
        CHECK(discrete_kl(pg, qg, sorted_grid_map(pg, qg)) == doctest::Approx(brute_force_min_kl(p, q)).epsilon(1e-12));
    }
}

TEST_CASE("sorted map beats random permutations on a grid") {
    Rng rng(18);
    GridDensity p, q;
    p.origin = q.origin = {0.0, 0.0};
    p.spacing = q.spacing = {0.1, 0.1};
    p.extents = q.extents = {20, 20};
    p.masses = random_simplex(rng, 400);
    q.masses = random_simplex(rng, 400);
    const double sorted = discrete_kl(p, q, sorted_grid_map(p, q));
    std::vector<std::size_t> perm(400);
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = 0; k < 100; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK(permutation_kl(p.masses, q.masses, perm) >= sorted);
    }
}

TEST_CASE("gaussian cell masses") {
    const auto geometry = bimodal_grid();
    const auto g = gaussian_cell_masses(geometry, 0.25);
    const auto cell = geometry.flatten(std::vector<std::size_t>{230, 170});
    const auto c = geometry.cell_center(cell);
    const auto q = quadrature_mass(AnalyticDensity::gaussian({0.0, 0.0}, {0.25, 0.0, 0.0, 0.25}),
                                   Box{{c[0] - 0.005, c[1] - 0.005}, {c[0] + 0.005, c[1] + 0.005}}, 1e-14);
    CHECK(g.masses[cell] == doctest::Approx(q).epsilon(1e-9));
    CHECK(g.total_mass() == doctest::Approx(std::pow(std::erf(2.0 / std::sqrt(2.0 * 0.25)), 2)).epsilon(1e-12));
}

TEST_CASE("transported samples keep their cell offsets") {
    const auto p = row_grid({0.9, 0.1}), q = row_grid({0.3, 0.7});
    const auto map = sorted_grid_map(p, q);
    Points x(3, 2);
    x(0, 0) = 0.25, x(0, 1) = 0.5;   // cell 0
    x(1, 0) = 0.75, x(1, 1) = 1.25;  // cell 1
    x(2, 0) = 5.0, x(2, 1) = 0.5;    // outside
    const auto z = transport_samples(map, p, q, x);
    REQUIRE(z.count() == 2);
    CHECK(z(0, 0) == doctest::Approx(0.25));
    CHECK(z(0, 1) == doctest::Approx(1.5));
    CHECK(z(1, 0) == doctest::Approx(0.75));
    CHECK(z(1, 1) == doctest::Approx(0.25));
}

TEST_CASE("rearrangement of a standard normal is itself") {
    const auto profile = radial_rearrangement(AnalyticDensity::standard_normal(2), 1024);
    for (double r : {0.0, 0.5, 1.0, 1.5, 2.0, 2.5}) {
        const double expected = std::exp(-0.5 * r * r) / (2.0 * pi);
        CHECK(profile.density_at(r) == doctest::Approx(expected).epsilon(0.01));
    }
    CHECK(profile.mass() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(profile.second_moment() == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(profile.entropy() == doctest::Approx(std::log(2.0 * pi * std::numbers::e)).epsilon(1e-3));
    CHECK(optimal_scale(profile, 2) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(lower_bound_kl(profile, 2).lower_bound) < 1e-3);
    CHECK(std::abs(profile.kl_to_isotropic_gaussian(1.0)) < 1e-3);
}

TEST_CASE("rearrangement of an anisotropic gaussian") {
    const auto profile = radial_rearrangement(AnalyticDensity::gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 4.0}), 2048);
    const double pmax = 1.0 / (4.0 * pi);
    CHECK(profile.max_density() == doctest::Approx(pmax).epsilon(1e-3));
    for (double ratio : {0.8, 0.5, 0.1, 0.01}) {
        const double ellipse = 2.0 * pi * 2.0 * std::log(1.0 / ratio);
        CHECK(profile.superlevel_volume(ratio * pmax) == doctest::Approx(ellipse).epsilon(0.02));
    }
    // p* is N(0, 2I): the matched Gaussian, so the bound vanishes.
    const auto report = lower_bound_kl(profile, 2);
    CHECK(report.covariance_det == doctest::Approx(4.0).epsilon(2e-3));
    CHECK(std::abs(report.lower_bound) < 1e-3);
    CHECK(optimal_scale(radial_rearrangement(AnalyticDensity::gaussian({0.0, 0.0}, {4.0, 0.0, 0.0, 4.0}), 2048), 2) ==
          doctest::Approx(0.5).epsilon(2e-3));
}

TEST_CASE("bimodal grid solution") {
    const auto grid = bimodal_grid();
    const auto sol = solve_volume_preserving(grid);
    CHECK(sol.profile.mass() == doctest::Approx(1.0).epsilon(1e-2));
    const auto rows = sol.profile.level_table(64);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        CHECK(rows[k].level <= rows[k - 1].level);
        CHECK(rows[k].superlevel_volume >= rows[k - 1].superlevel_volume);
        CHECK(rows[k].radius >= rows[k - 1].radius);
    }
    REQUIRE(sol.report.achieved_kl.has_value());
    CHECK(*sol.report.achieved_kl == doctest::Approx(sol.report.lower_bound).epsilon(0.05));
    CHECK(sol.report.lower_bound > 0.0);

    // Property: the transported samples have the radial profile's spread.
    const auto z = sol.profile.sample(200000, 3);
    double m2 = 0.0;
    for (std::size_t i = 0; i < z.count(); ++i) m2 += z(i, 0) * z(i, 0) + z(i, 1) * z(i, 1);
    CHECK(m2 / static_cast<double>(z.count()) == doctest::Approx(sol.profile.second_moment()).epsilon(0.01));
}

TEST_CASE("counterexample bounds") {
    const auto grid = log_grid(1e-3, 1e3, 2001);
    CHECK(grid.front() == doctest::Approx(1e-3));
    CHECK(grid.back() == doctest::Approx(1e3));
    const auto b = counterexample_bounds(0.1, grid);
    CHECK(std::abs(b.case1_bound - 0.02) <= 1e-15);
    CHECK(std::abs(b.case2_bound - 0.005836) <= 1e-6);
    CHECK(b.sweep_minimum >= 0.0058);
    CHECK(b.max_volume_a == doctest::Approx(1.0 / (0.8 * std::numbers::e)).epsilon(1e-14));

    // Independent maximization of |A| over J from the sweep rows.
    const auto volume = [](double log_j) {
        const double j = std::exp(log_j);
        return -counterexample_bounds(0.1, std::span<const double>(&j, 1)).sweep[0].volume_a;
    };
    const auto best = boost::math::tools::brent_find_minima(volume, std::log(0.1), std::log(1000.0), 50);
    CHECK(-best.second == doctest::Approx(0.4598).epsilon(1e-4));
    CHECK(std::exp(best.first) == doctest::Approx(2.0 * pi * std::numbers::e * 0.8).epsilon(1e-6));
    CHECK(std::exp(best.first) == doctest::Approx(b.argmax_jacobian).epsilon(1e-6));

    CHECK_THROWS_AS(counterexample_bounds(0.95, grid), Error);
    CHECK_THROWS_AS(counterexample_bounds(0.1, grid, 1.2), Error);
}

TEST_CASE("mode counting and measure-preserving pushforwards") {
    const auto grid = bimodal_grid();
    CHECK(count_modes(grid) == 2);
    CHECK(count_modes(discretize(AnalyticDensity::standard_normal(2), {-5.0, -5.0}, {0.05, 0.05}, {200, 200})) == 1);
    auto uniform = row_grid(std::vector<double>(16, 1.0 / 16.0));
    CHECK(count_modes(uniform) == 1);

    const auto same = pushforward_grid(grid, identity_map());
    for (std::size_t i = 0; i < grid.masses.size(); i += 97)
        CHECK(same.masses[i] == doctest::Approx(grid.masses[i]).epsilon(1e-9));

    const auto wide = discretize(AnalyticDensity::bimodal_gmm(), {-3.0, -3.0}, {0.02, 0.02}, {300, 300});
    const auto rotated = pushforward_grid(wide, rotation_map(pi / 6.0));
    CHECK(count_modes(rotated) == 2);
    CHECK(count_modes(pushforward_grid(wide, shear_map([](double x) { return 0.7 * x; }))) == 2);
    // Isometry: the sorted cell masses agree up to interpolation error.
    auto a = wide.masses, b = rotated.masses;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
    CHECK(l1 < 0.01);

    const auto m = rotation_map(0.4);
    const auto there = m.forward(0.3, -0.7);
    const auto back = m.inverse(there[0], there[1]);
    CHECK(back[0] == doctest::Approx(0.3));
    CHECK(back[1] == doctest::Approx(-0.7));
    CHECK_THROWS_AS(pushforward_grid(grid, shear_map([](double x) { return 3.0 * x; })), Error);
}
