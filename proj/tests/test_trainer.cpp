#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowlab/trainer.hpp"

using namespace flowlab;

namespace {

AnalyticDensity correlated(double rho) { return AnalyticDensity::gaussian({0.0, 0.0}, {1.0, rho, rho, 1.0}); }

TrainerConfig small_config() {
    TrainerConfig c;
    c.samples = std::size_t{1} << 14;
    c.bins = 16;
    c.blocks = 4;
    c.rotation_candidates = 4;
    c.kl_samples = 20000;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("moment table on a correlated gaussian") {
    const double rho = 0.5;
    const auto x = correlated(rho).sample(std::size_t{1} << 18, 1);
    const auto table = fit_moment_table(x, RotationLayer::identity(2), 64);
    REQUIRE(table.bins() == 64);
    CHECK(table.total() == x.count());
    for (std::size_t j = 0; j < 64; ++j) {
        CHECK(table.counts[j] == x.count() / 64);
        const double se = std::sqrt(1.0 - rho * rho) / std::sqrt(static_cast<double>(table.counts[j]));
        // Within-bin mean of a is rho times the within-bin mean of b.
        CHECK(std::abs(table.means[j] - rho * table.centers[j]) < 3.0 * se + 1e-3);
    }
    // Bin spread adds the b-variation inside the bin; check the central bins.
    for (std::size_t j = 24; j < 40; ++j) CHECK(table.sds[j] == doctest::Approx(std::sqrt(0.75)).epsilon(0.03));
}

TEST_CASE("moment table under the null") {
    const auto x = AnalyticDensity::standard_normal(2).sample(std::size_t{1} << 18, 2);
    const auto table = fit_moment_table(x, RotationLayer::from_angle(0.4), 64);
    const double tol = 4.0 / std::sqrt(static_cast<double>(x.count() / 64));
    for (std::size_t j = 0; j < 64; ++j) {
        CHECK(std::abs(table.means[j]) < tol);
        CHECK(std::abs(table.sds[j] - 1.0) < tol);
    }
}

TEST_CASE("moment table errors") {
    Points x(4096, 2);
    for (std::size_t i = 0; i < x.count(); ++i) {
        x(i, 0) = static_cast<double>(i);
        x(i, 1) = 2.0;
    }
    CHECK_THROWS_WITH_AS(fit_moment_table(x, RotationLayer::identity(2), 16), doctest::Contains("bin"), Error);
    CHECK_THROWS_AS(fit_moment_table(Points(100, 2), RotationLayer::identity(2), 16), Error);
}

TEST_CASE("delta terms from a hand-built table") {
    MomentTable t;
    t.edges = {-1.0, 0.0, 1.0};
    t.counts = {10, 30};
    t.centers = {-0.5, 0.5};
    t.means = {0.2, -0.4};
    t.sds = {2.0, 0.5};
    const auto d = delta_terms(t);
    CHECK(d.mean_term == doctest::Approx(0.5 * (0.25 * 0.04 + 0.75 * 0.16)));
    const auto g = [](double s) { return s * s - 1.0 - std::log(s * s); };
    CHECK(d.variance_term == doctest::Approx(0.5 * (0.25 * g(2.0) + 0.75 * g(0.5))));
    CHECK(d.total() == doctest::Approx(d.mean_term + d.variance_term));
}

TEST_CASE("built blocks") {
    MomentTable t;
    t.edges = {-2.0, 0.0, 2.0};
    t.counts = {100, 100};
    t.centers = {-1.0, 1.0};
    t.means = {0.0, 0.0};
    t.sds = {1.0, 1.0};
    const auto identity = build_block(t, RotationLayer::identity(2), 1.0, 20.0);
    for (double b : {-3.0, 0.0, 0.7}) {
        CHECK(identity.effective(b).scale == doctest::Approx(1.0));
        CHECK(identity.effective(b).shift == doctest::Approx(0.0));
    }
    t.sds = {100.0, 100.0};
    CHECK(build_block(t, RotationLayer::identity(2), 1.0, 20.0).effective(0.0).scale == doctest::Approx(1.0 / 20.0));

    // Fitted on a correlated gaussian, the block standardizes fresh samples bin by bin.
    const auto target = correlated(0.5);
    const auto id = RotationLayer::identity(2);
    const auto fitted = build_block(fit_moment_table(target.sample(std::size_t{1} << 18, 4), id, 64), id, 1.0, 20.0);
    Points fresh = target.sample(std::size_t{1} << 18, 5);
    std::vector<double> logdet(fresh.count(), 0.0);
    fitted.forward_batch(fresh, logdet);
    const auto after = fit_moment_table(fresh, id, 64);
    std::size_t outliers = 0;
    for (std::size_t j = 0; j < 64; ++j) {
        // Fitting noise and fresh-sample noise are independent and of equal size.
        const double se = std::sqrt(2.0 / static_cast<double>(after.counts[j]));
        if (std::abs(after.means[j]) > 3.0 * se || std::abs(after.sds[j] - 1.0) > 3.0 * se) ++outliers;
    }
    CHECK(outliers <= 2);
    CHECK(delta_affine_hat(fresh, id, 64) < 5e-3);
}

TEST_CASE("delta estimate") {
    const auto id = RotationLayer::identity(2);
    const auto null = AnalyticDensity::standard_normal(2).sample(std::size_t{1} << 18, 6);
    for (double theta : {0.0, 0.9, 2.1}) CHECK(delta_affine_hat(null, RotationLayer::from_angle(theta), 64) < 5e-3);
    const double d = delta_affine_hat(correlated(0.5).sample(std::size_t{1} << 18, 7), id, 64);
    CHECK(d == doctest::Approx(-0.5 * std::log(0.75)).epsilon(0.01 / 0.1438));
}

TEST_CASE("rotation selection") {
    const auto x = correlated(0.5).sample(std::size_t{1} << 16, 8);
    const auto a = select_rotation(x, 6, 9, 32), b = select_rotation(x, 6, 9, 32);
    CHECK(a.angle == b.angle);
    CHECK(a.candidate_angles == b.candidate_angles);
    REQUIRE(a.candidate_deltas.size() == 6);
    CHECK(a.delta.total() == *std::max_element(a.candidate_deltas.begin(), a.candidate_deltas.end()));
    for (double t : a.candidate_angles) {
        CHECK(t >= 0.0);
        CHECK(t < std::numbers::pi);
    }
    const auto one = select_rotation(x, 1, 10, 32);
    REQUIRE(one.candidate_angles.size() == 1);
    CHECK(one.angle == one.candidate_angles[0]);
}

TEST_CASE("KL estimates") {
    const Flow empty;
    const auto normal = AnalyticDensity::standard_normal(2);
    const auto same = kl_hat(empty, normal, 20000, 1);
    CHECK(std::abs(same.value) <= 3.0 * same.se + 1e-12);
    const auto wide = kl_hat(empty, AnalyticDensity::gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 4.0}), 200000, 2);
    const double exact = 0.5 * (4.0 - 1.0 - std::log(4.0));
    CHECK(std::abs(wide.value - exact) < 3.0 * wide.se);
    CHECK(wide.se > 0.0);
}

TEST_CASE("trainer config validation") {
    TrainerConfig c;
    c.bins = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("bins"), Error);
    c = TrainerConfig{};
    c.damping = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("damping"), Error);
    c = TrainerConfig{};
    c.samples = 100;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_NOTHROW(TrainerConfig{}.validate());
}

TEST_CASE("greedy training") {
    const auto ring = AnalyticDensity::ring_mixture(20, 0.3, 1.0);
    const auto a = greedy_train(ring, small_config()), b = greedy_train(ring, small_config());
    REQUIRE(a.trace.records.size() == 5);
    CHECK(a.flow.size() == 4);
    for (std::size_t n = 0; n < 5; ++n) {
        CHECK(a.trace.records[n].kl_hat == b.trace.records[n].kl_hat);
        CHECK(a.trace.records[n].angle == b.trace.records[n].angle);
    }
    CHECK(a.trace.records.back().kl_hat < a.trace.records.front().kl_hat);
    double decrease = 0.0;
    for (const auto& r : a.trace.records) decrease += r.realized_decrease;
    CHECK(decrease <= a.trace.records.front().kl_hat + 3.0 * a.trace.records.front().kl_se);

    auto cfg = small_config();
    cfg.samples = std::size_t{1} << 16;
    cfg.bins = 32;
    const auto fixed = greedy_train(AnalyticDensity::standard_normal(2), cfg);
    for (const auto& r : fixed.trace.records) CHECK(r.kl_hat < 5e-3);
}
