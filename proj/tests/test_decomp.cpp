#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "flowlab/config.hpp"
#include "flowlab/decomp.hpp"

using namespace flowlab;
using std::numbers::pi;

namespace {

std::vector<double> column(const Points& x, std::size_t k) {
    std::vector<double> v(x.count());
    for (std::size_t i = 0; i < x.count(); ++i) v[i] = x(i, k);
    return v;
}

std::vector<double> log_densities(const AnalyticDensity& d, const Points& x) {
    std::vector<double> v(x.count());
    for (std::size_t i = 0; i < x.count(); ++i) v[i] = d.log_density(x.row(i));
    return v;
}

// Differential entropy of an equal two-component 1D mixture by quadrature.
double mixture_entropy(double sep, double sigma) {
    auto f = [&](double a) {
        const double z1 = (a - sep) / sigma, z2 = (a + sep) / sigma;
        return 0.5 * (std::exp(-0.5 * z1 * z1) + std::exp(-0.5 * z2 * z2)) / (sigma * std::sqrt(2 * pi));
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double a) {
            const double v = f(a);
            return v > 0.0 ? -v * std::log(v) : 0.0;
        },
        -sep - 12 * sigma, sep + 12 * sigma, 20, 1e-13);
}

}  // namespace

TEST_CASE("histogram entropy of known distributions") {
    const auto normal = AnalyticDensity::standard_normal(2).sample(1 << 16, 1);
    const auto h = histogram_entropy(column(normal, 0));
    CHECK(h.entropy == doctest::Approx(0.5 * std::log(2 * pi * std::numbers::e)).epsilon(0.005));
    CHECK(h.log_density.size() == normal.count());
    CHECK(h.cells > 0);

    Rng rng(2);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<double> flat(1 << 16);
    for (double& v : flat) v = u(rng);
    CHECK(histogram_entropy(flat).entropy == doctest::Approx(std::log(3.0)).epsilon(0.01));

    // Property: entropy shifts by log(c) under scaling.
    std::vector<double> scaled = column(normal, 1);
    const double h1 = histogram_entropy(scaled).entropy;
    for (double& v : scaled) v *= 4.0;
    CHECK(histogram_entropy(scaled).entropy - h1 == doctest::Approx(std::log(4.0)).epsilon(1e-6));

    const auto mix = resolve_target("conditional_bimodal").density.sample(1 << 16, 3);
    CHECK(histogram_entropy(column(mix, 1)).entropy == doctest::Approx(mixture_entropy(1.5, 0.3)).epsilon(0.01));
}

TEST_CASE("histogram entropy errors") {
    CHECK_THROWS_AS(histogram_entropy(std::vector<double>(8, 1.0)), Error);
    CHECK_THROWS_AS(histogram_entropy(std::vector<double>(100, 1.0)), Error);
    // A single remote outlier stretches the range over far too many cells.
    std::vector<double> outlier(1000);
    for (std::size_t i = 0; i < outlier.size(); ++i) outlier[i] = 1e-3 * static_cast<double>(i);
    outlier.back() = 1e9;
    CHECK_THROWS_WITH_AS(histogram_entropy(outlier), doctest::Contains("underflow"), Error);
    // Cubed Cauchy quantiles: tails far heavier than the interquartile range suggests.
    std::vector<double> heavy(64);
    for (std::size_t i = 0; i < heavy.size(); ++i) heavy[i] = std::pow(std::tan(pi * ((i + 0.5) / 64.0 - 0.5)), 3);
    CHECK_THROWS_WITH_AS(histogram_entropy(heavy), doctest::Contains("underflow"), Error);
    // Two well-separated narrow modes leave an empty gap, which is not an underflow.
    std::vector<double> gap = column(AnalyticDensity::standard_normal(2).sample(4096, 9), 0);
    for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = 0.1 * gap[i] + (i % 2 == 0 ? -3.0 : 3.0);
    const auto split = histogram_entropy(gap);
    CHECK(split.empty_cells * 2 > split.cells);
    CHECK(split.entropy == doctest::Approx(std::log(0.1) + 0.5 * std::log(2 * pi * std::numbers::e) + std::log(2.0)).epsilon(0.01));
}

TEST_CASE("KL to the standard normal") {
    const auto g = AnalyticDensity::gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 4.0});
    const auto x = g.sample(200000, 4);
    const auto kl = kl_to_standard_normal(x, log_densities(g, x));
    CHECK(std::abs(kl.value - 0.5 * (4.0 - 1.0 - std::log(4.0))) < 3.0 * kl.se);
}

TEST_CASE("decomposition of a standard normal") {
    const auto x = AnalyticDensity::standard_normal(2).sample(1 << 18, 5);
    const auto r = decompose(x, RotationLayer::identity(2), 64);
    CHECK(std::abs(r.P) < 5e-3);
    CHECK(std::abs(r.Jbar) < 5e-3);
    CHECK(std::abs(r.Sbar) < 5e-3);
    CHECK(r.Dbar == 0.0);
    CHECK(r.total == doctest::Approx(r.P + r.Jbar + r.Sbar + r.Dbar));
    CHECK(r.per_bin.size() == 64);
    CHECK(r.scan_angles.size() == 13);
}

TEST_CASE("decomposition of a correlated gaussian") {
    const auto g = AnalyticDensity::gaussian({0.0, 0.0}, {1.0, 0.5, 0.5, 1.0});
    const auto x = g.sample(1 << 20, 6);
    const auto kl = kl_to_standard_normal(x, log_densities(g, x));
    const auto r = decompose(x, RotationLayer::identity(2), 64);
    CHECK(std::abs(r.Jbar) < 3.0 * r.se_J + 2e-3);
    CHECK(std::abs(r.total - kl.value) < 3.0 * r.combined_se(kl.se));
    CHECK(r.delta_affine_at_q == doctest::Approx(r.Sbar));
    const double exact = -0.5 * std::log(0.75);
    CHECK(r.delta_affine_star == doctest::Approx(exact).epsilon(0.03));
    CHECK(r.delta_universal_star == doctest::Approx(exact).epsilon(0.03));
}

TEST_CASE("decomposition of the conditional bimodal target") {
    const auto spec = resolve_target("conditional_bimodal");
    const auto x = spec.density.sample(1 << 20, 7);
    const auto kl = kl_to_standard_normal(x, log_densities(spec.density, x));
    const auto r = decompose(x, RotationLayer::identity(2), 64);
    const double var = 1.5 * 1.5 + 0.09;
    const double exact_j = 0.5 * std::log(2 * pi * std::numbers::e * var) - mixture_entropy(1.5, 0.3);
    CHECK(r.Jbar > 0.05);
    CHECK(std::abs(r.Jbar - exact_j) < 3.0 * r.combined_se());
    CHECK(r.delta_universal_at_q - r.delta_affine_at_q == doctest::Approx(r.Jbar).epsilon(1e-12));
    CHECK(std::abs(r.total - kl.value) < 3.0 * r.combined_se(kl.se));
    CHECK(r.delta_universal_star >= r.delta_affine_star);
}

TEST_CASE("decomposition preconditions") {
    const auto x = AnalyticDensity::standard_normal(2).sample(4096, 8);
    CHECK_THROWS_AS(decompose(x, RotationLayer::identity(2), 64), Error);
    CHECK_THROWS_AS(decompose(AnalyticDensity::standard_normal(3).sample(1 << 16, 9), RotationLayer::identity(2), 8),
                    Error);
}
