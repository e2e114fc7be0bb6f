#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowlab/flow.hpp"
#include "flowlab/flow_io.hpp"
#include "flowlab/quadrature.hpp"

using namespace flowlab;

namespace {

CouplingBlock constant_block(double s, double t, double alpha, RotationLayer q = RotationLayer::identity(2)) {
    return CouplingBlock(std::move(q), SplineConditioner({0.0}, {s}, {t}), alpha);
}

// Smooth but non-trivial conditioner with knots on [-3, 3].
CouplingBlock random_block(Rng& rng, double alpha = 1.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> c, s, t;
    for (int k = 0; k < 12; ++k) {
        c.push_back(-3.0 + 6.0 * k / 11.0);
        s.push_back(std::exp(0.5 * u(rng)));
        t.push_back(0.5 * u(rng));
    }
    return CouplingBlock(RotationLayer::haar(2, rng), SplineConditioner(c, s, t), alpha);
}

double dist(std::span<const double> a, std::span<const double> b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

}  // namespace

TEST_CASE("rotation layers") {
    const auto q = RotationLayer::from_angle(0.3);
    CHECK(q(0, 0) == doctest::Approx(std::cos(0.3)));
    CHECK(q(0, 1) == doctest::Approx(-std::sin(0.3)));
    CHECK(q.angle() == doctest::Approx(0.3));
    Rng rng(1);
    for (int k = 0; k < 10; ++k) {
        const auto h = RotationLayer::haar(2, rng);
        CHECK(h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
        double x[2] = {0.3, -1.2}, y[2], back[2];
        h.apply(x, y);
        h.apply_transpose(y, back);
        CHECK(back[0] == doctest::Approx(x[0]).epsilon(1e-14));
        CHECK(back[1] == doctest::Approx(x[1]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(RotationLayer::from_matrix(2, {1.0, 0.1, 0.0, 1.0}), Error);
    CHECK_THROWS_AS(RotationLayer::from_matrix(2, {1.0, 0.0, 0.0, -1.0}), Error);
}

TEST_CASE("hand-evaluated blocks") {
    const double x[2] = {3.0, 5.0};
    double z[2], back[2];

    const auto identity = constant_block(1.0, 0.0, 1.0);
    CHECK(identity.forward(x, z) == doctest::Approx(0.0));
    CHECK(z[0] == 3.0);
    CHECK(z[1] == 5.0);

    const auto full = constant_block(2.0, 1.0, 1.0);
    CHECK(full.forward(x, z) == doctest::Approx(std::log(2.0)));
    CHECK(z[0] == doctest::Approx(3.0));
    CHECK(z[1] == doctest::Approx(11.0));

    const auto damped = constant_block(2.0, 1.0, 0.5);
    CHECK(damped.forward(x, z) == doctest::Approx(std::log(1.5)));
    CHECK(z[1] == doctest::Approx(8.0));
    const double zin[2] = {3.0, 8.0};
    CHECK(damped.inverse(zin, back) == doctest::Approx(-std::log(1.5)));
    CHECK(back[0] == doctest::Approx(3.0));
    CHECK(back[1] == doctest::Approx(5.0));
    CHECK(logdet_fd_check(damped, x, 1e-5) == doctest::Approx(std::log(1.5)).epsilon(1e-6));

    const auto rotation_only = constant_block(1.0, 0.0, 1.0, RotationLayer::from_angle(0.7));
    CHECK(std::abs(logdet_fd_check(rotation_only, x, 1e-5)) < 1e-8);
}

TEST_CASE("scale clamp") {
    const auto wide = constant_block(1.0 / 100.0, 0.0, 1.0);
    CHECK(wide.effective(0.0).scale == doctest::Approx(1.0 / 20.0));
    const auto tall = constant_block(100.0, 0.0, 1.0);
    CHECK(tall.effective(0.0).scale == doctest::Approx(20.0));
    CHECK_THROWS_AS(constant_block(1.0, 0.0, 0.0), Error);
    CHECK_THROWS_AS(CouplingBlock(RotationLayer::identity(2), SplineConditioner(), 1.0, 1.0), Error);
}

TEST_CASE("random blocks: inverse, log-determinant and stretch properties") {
    Rng rng(42);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        const auto block = random_block(rng, trial % 2 == 0 ? 1.0 : 0.5);
        for (int k = 0; k < 100; ++k) {
            const double x[2] = {1.5 * n01(rng), 1.5 * n01(rng)};
            double z[2], back[2];
            const double ld = block.forward(x, z);
            const double ild = block.inverse(z, back);
            CHECK(dist(x, back) < 1e-12);
            CHECK(ld + ild == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(std::abs(ld - logdet_fd_check(block, x, 1e-5)) < 1e-5);
            const double L = block.lipschitz();
            CHECK(block.effective(x[0]).scale >= 1.0 / L);
            CHECK(block.effective(x[0]).scale <= L);
        }
    }
}

TEST_CASE("flows compose blocks") {
    Rng rng(3);
    Flow flow;
    const double x[2] = {0.4, -0.9};
    auto empty = flow.forward(x);
    CHECK(empty.logdet == 0.0);
    CHECK(empty.point == std::vector<double>{0.4, -0.9});
    const auto normal = AnalyticDensity::standard_normal(2);
    const double origin[2] = {0.0, 0.0};
    CHECK(model_log_density(flow, normal, origin) == doctest::Approx(-1.8379).epsilon(1e-4));

    for (int k = 0; k < 6; ++k) flow.push_back(random_block(rng, 0.5));
    const auto z = flow.forward(x);
    const auto back = flow.inverse(z.point);
    CHECK(dist(x, back.point) < 1e-12);
    CHECK(z.logdet + back.logdet == doctest::Approx(0.0).epsilon(1e-12));

    Points pts = normal.sample(64, 9);
    Points copy = pts;
    const auto logdet = flow.forward_batch(pts);
    for (std::size_t i = 0; i < pts.count(); ++i) {
        const auto one = flow.forward(copy.row(i));
        CHECK(one.point[0] == doctest::Approx(pts(i, 0)).epsilon(1e-14));
        CHECK(one.logdet == doctest::Approx(logdet[i]).epsilon(1e-14));
    }

    Flow overflow;
    overflow.push_back(constant_block(1.0, 0.0, 1.0));
    overflow.push_back(constant_block(20.0, 0.0, 1.0));
    const double huge[2] = {0.0, 1e308};
    CHECK_THROWS_WITH_AS(overflow.forward(huge), doctest::Contains("block 1"), Error);
}

TEST_CASE("model density of a single block integrates to one") {
    Rng rng(8);
    const auto normal = AnalyticDensity::standard_normal(2);
    for (int trial = 0; trial < 3; ++trial) {
        Flow flow({random_block(rng, 1.0)});
        const auto q = integrate_2d([&](double a, double b) {
            const double p[2] = {a, b};
            return std::exp(model_log_density(flow, normal, p));
        }, Box{{-12.0, -12.0}, {12.0, 12.0}}, 1e-7);
        CHECK(q.value == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("flow JSON round trip") {
    Rng rng(5);
    Flow flow;
    for (int k = 0; k < 4; ++k) flow.push_back(random_block(rng, 0.5));
    const Flow back = flow_from_json(flow_to_json(flow));
    REQUIRE(back.size() == 4);
    const double x[2] = {0.7, 0.1};
    const auto a = flow.forward(x), b = back.forward(x);
    CHECK(a.point == b.point);
    CHECK(a.logdet == b.logdet);
    CHECK_THROWS_AS(flow_from_json(nlohmann::json{{"schema", "other"}}), Error);
}
