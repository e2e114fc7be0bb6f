#include "flowlab/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "flowlab/config.hpp"
#include "flowlab/decomp.hpp"
#include "flowlab/quadrature.hpp"

namespace flowlab {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

GridDensity bimodal_on_grid(std::size_t cells) {
    const double h = 4.0 / static_cast<double>(cells);
    return discretize(AnalyticDensity::bimodal_gmm(), {-2.0, -2.0}, {h, h}, {cells, cells});
}

AnalyticDensity correlated_gaussian(double rho) { return AnalyticDensity::gaussian({0.0, 0.0}, {1.0, rho, rho, 1.0}); }

std::vector<double> log_densities(const AnalyticDensity& d, const Points& x) {
    std::vector<double> out(x.count());
    for (std::size_t i = 0; i < x.count(); ++i) out[i] = d.log_density(x.row(i));
    return out;
}

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

// Negentropy of the equal mixture of N(-sep, sigma^2) and N(sep, sigma^2).
double mixture_negentropy(double sep, double sigma) {
    auto f = [&](double a) {
        const double z1 = (a - sep) / sigma, z2 = (a + sep) / sigma;
        return 0.5 * (std::exp(-0.5 * z1 * z1) + std::exp(-0.5 * z2 * z2)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    };
    const double span = sep + 12.0 * sigma;
    const auto h = integrate_1d(
        [&](double a) {
            const double v = f(a);
            return v > 0.0 ? -v * std::log(v) : 0.0;
        },
        -span, span, 1e-12);
    const double var = sep * sep + sigma * sigma;
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var) - h.value;
}

}  // namespace

const GridDensity& CheckContext::bimodal_grid() {
    if (!bimodal_grid_) bimodal_grid_ = bimodal_on_grid(400);
    return *bimodal_grid_;
}

const VolumePreservingSolution& CheckContext::bimodal_solution() {
    if (!bimodal_solution_) bimodal_solution_ = solve_volume_preserving(bimodal_grid());
    return *bimodal_solution_;
}

TrainerConfig CheckContext::ring_config() {
    TrainerConfig c;
    c.samples = std::size_t{1} << 18;
    c.bins = 64;
    c.blocks = 100;
    c.damping = 0.5;
    c.rotation_candidates = 10;
    c.lipschitz = 20.0;
    c.seed = 0;
    c.kl_samples = 100000;
    return c;
}

const TrainResult& CheckContext::ring_training() {
    if (!ring_training_) ring_training_ = greedy_train(AnalyticDensity::ring_mixture(20, 0.3, 1.0), ring_config());
    return *ring_training_;
}

CheckResult check_counterexample(CheckContext&) {
    CheckResult r{1, "counterexample bounds", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto b = counterexample_bounds(0.1, log_grid(1e-3, 1e3, 2001));
    r.seconds = since(t0);
    const double e1 = std::abs(b.case1_bound - 0.02), e2 = std::abs(b.case2_bound - 0.005836);
    r.passed = e1 <= 1e-15 && e2 <= 1e-6 && b.sweep_minimum >= 0.0058 && r.seconds < 1.0;
    r.detail = fmt::format("case1={:.17g} case2={:.9f} sweep_min={:.9f}", b.case1_bound, b.case2_bound,
                           b.sweep_minimum);
    return r;
}

CheckResult check_bound_consistency(CheckContext& ctx) {
    CheckResult r{2, "volume-preserving bound consistency", false, {}, 0.0};
    const auto t0 = Clock::now();
    std::vector<double> gaps;
    for (std::size_t cells : {100, 200}) {
        const auto sol = solve_volume_preserving(bimodal_on_grid(cells));
        gaps.push_back((*sol.report.achieved_kl - sol.report.lower_bound) / sol.report.lower_bound);
    }
    const auto& sol = ctx.bimodal_solution();
    gaps.push_back((*sol.report.achieved_kl - sol.report.lower_bound) / sol.report.lower_bound);
    r.seconds = since(t0);
    const bool shrinking = std::abs(gaps[1]) < std::abs(gaps[0]) && std::abs(gaps[2]) < std::abs(gaps[1]);
    r.passed = std::abs(gaps[2]) < 0.05 && shrinking && r.seconds < 30.0;
    r.detail = fmt::format("bound={:.6f} achieved={:.6f} gaps 100/200/400 = {:+.3e} {:+.3e} {:+.3e}",
                           sol.report.lower_bound, *sol.report.achieved_kl, gaps[0], gaps[1], gaps[2]);
    return r;
}

CheckResult check_optimal_scale(CheckContext& ctx) {
    CheckResult r{3, "optimal scale", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto& sol = ctx.bimodal_solution();
    const Points x = AnalyticDensity::bimodal_gmm().sample(4096, 31);
    const Points z = transport_samples(sol.map, ctx.bimodal_grid(), sol.latent, x);
    double m[2] = {0, 0}, c[3] = {0, 0, 0};
    const double n = static_cast<double>(z.count());
    for (std::size_t i = 0; i < z.count(); ++i) m[0] += z(i, 0) / n, m[1] += z(i, 1) / n;
    for (std::size_t i = 0; i < z.count(); ++i) {
        const double u = z(i, 0) - m[0], v = z(i, 1) - m[1];
        c[0] += u * u, c[1] += u * v, c[2] += v * v;
    }
    for (double& v : c) v /= n - 1.0;
    const double c_emp = std::pow(c[0] * c[2] - c[1] * c[1], -0.25);
    const double c_formula = sol.report.optimal_scale;
    const double rel = std::abs(c_emp - c_formula) / c_formula;

    const auto wide = radial_rearrangement(AnalyticDensity::gaussian({0.0, 0.0}, {4.0, 0.0, 0.0, 4.0}), 2048);
    const double c_wide = optimal_scale(wide, 2);
    r.seconds = since(t0);
    r.passed = rel < 0.02 && std::abs(c_wide - 0.5) < 1e-3;
    r.detail = fmt::format("C={:.5f} C_emp={:.5f} ({} samples, rel {:.2e}); N(0,4I): C={:.6f}", c_formula, c_emp,
                           z.count(), rel, c_wide);
    return r;
}

CheckResult check_gaussian_delta(CheckContext&) {
    CheckResult r{4, "Gaussian delta closed form", false, {}, 0.0};
    const auto t0 = Clock::now();
    r.passed = true;
    for (double rho : {0.3, 0.5, 0.8}) {
        const auto ts = Clock::now();
        const Points x = correlated_gaussian(rho).sample(std::size_t{1} << 20, 400 + static_cast<std::uint64_t>(rho * 10));
        const double d = delta_affine_hat(x, RotationLayer::identity(2), 64);
        const double exact = -0.5 * std::log(1.0 - rho * rho);
        const double rel = std::abs(d - exact) / exact;
        const double secs = since(ts);
        r.passed = r.passed && rel < 0.02 && secs < 10.0;
        r.detail += fmt::format("{}rho={} hat={:.5f} exact={:.5f} rel={:.2e} ({:.1f}s)", r.detail.empty() ? "" : "; ",
                                rho, d, exact, rel, secs);
    }
    r.seconds = since(t0);
    return r;
}

CheckResult check_fixed_point(CheckContext&) {
    CheckResult r{5, "standard normal fixed point", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto normal = AnalyticDensity::standard_normal(2);
    double sum = 0.0, worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Points x = normal.sample(std::size_t{1} << 18, 500 + s);
        const double d = select_rotation(x, 10, 500 + s, 64).delta.total();
        sum += d;
        worst = std::max(worst, d);
    }
    const double mean = sum / 20.0;

    const auto target = correlated_gaussian(0.5);
    const auto identity = RotationLayer::identity(2);
    const auto table = fit_moment_table(target.sample(std::size_t{1} << 18, 600), identity, 64);
    const auto block = build_block(table, identity, 1.0, 20.0);
    Points fresh = target.sample(std::size_t{1} << 18, 601);
    std::vector<double> logdet(fresh.count(), 0.0);
    const double before = select_rotation(fresh, 10, 602, 64).delta.total();
    block.forward_batch(fresh, logdet);
    const double after = select_rotation(fresh, 10, 602, 64).delta.total();
    r.seconds = since(t0);
    r.passed = mean < 5e-3 && after < 5e-3;
    r.detail = fmt::format("N(0,I) mean={:.2e} max={:.2e}; rho=0.5 before={:.4f} after one block={:.2e}", mean,
                           worst, before, after);
    return r;
}

CheckResult check_greedy_ring(CheckContext& ctx) {
    CheckResult r{6, "greedy training on the ring", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto& trace = ctx.ring_training().trace.records;
    r.seconds = since(t0);
    const double kl0 = trace.front().kl_hat, kl_final = trace.back().kl_hat;
    bool monotone = true;
    std::size_t worst_block = 0;
    double worst_rise = -1e300, sum_decrease = 0.0, sum_positive = 0.0;
    for (std::size_t n = 1; n < trace.size(); ++n) {
        const double rise = trace[n].kl_hat - trace[n - 1].kl_hat;
        const double allowed = 3.0 * std::max(trace[n].kl_se, trace[n - 1].kl_se);
        if (rise > allowed) monotone = false;
        if (rise - allowed > worst_rise) worst_rise = rise - allowed, worst_block = n;
        sum_decrease += trace[n].realized_decrease;
        sum_positive += std::max(0.0, trace[n].realized_decrease);
    }
    const bool series = sum_decrease <= kl0 + 3.0 * trace.front().kl_se;
    r.passed = kl_final < 0.1 && kl_final < kl0 && monotone && series && r.seconds < 300.0;
    r.detail = fmt::format(
        "KL {:.4f} -> {:.4f} (se {:.1e}); sum decreases={:.4f} (positive part {:.4f}); final delta={:.2e}; {}",
        kl0, kl_final, trace.back().kl_se, sum_decrease, sum_positive, trace.back().delta_hat,
        monotone ? "no significant increases" : fmt::format("increase at block {}", worst_block));
    return r;
}

CheckResult check_rearranged_delta(CheckContext& ctx) {
    CheckResult r{7, "delta on the radial rearrangement", false, {}, 0.0};
    const auto t0 = Clock::now();
    const Points z = ctx.bimodal_solution().profile.sample(std::size_t{1} << 20, 700);
    Rng rng = make_rng(700, 1);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    double max_mean = 0.0, min_var = 1e300;
    for (int k = 0; k < 8; ++k) {
        const auto terms = delta_affine_terms(z, RotationLayer::from_angle(angle(rng)), 64);
        max_mean = std::max(max_mean, terms.mean_term);
        min_var = std::min(min_var, terms.variance_term);
    }
    r.seconds = since(t0);
    r.passed = max_mean < 5e-3 && min_var > 0.01;
    r.detail = fmt::format("max mean term={:.2e} min variance term={:.4f} KL(p*||N(0,I))={:.4f}", max_mean, min_var,
                           ctx.bimodal_solution().profile.kl_to_isotropic_gaussian(1.0));
    return r;
}

CheckResult check_modes(CheckContext& ctx) {
    CheckResult r{8, "mode preservation", false, {}, 0.0};
    const auto t0 = Clock::now();
    const std::size_t base = count_modes(ctx.bimodal_grid());
    const GridDensity wide =
        discretize(AnalyticDensity::bimodal_gmm(), {-3.0, -3.0}, {0.01, 0.01}, {600, 600});
    const std::size_t sheared = count_modes(pushforward_grid(wide, shear_map([](double x) { return 0.7 * x; })));
    const std::size_t rotated = count_modes(pushforward_grid(wide, rotation_map(std::numbers::pi / 6.0)));
    const std::size_t normal =
        count_modes(discretize(AnalyticDensity::standard_normal(2), {-6.0, -6.0}, {0.02, 0.02}, {600, 600}));
    r.seconds = since(t0);
    r.passed = base == 2 && sheared == 2 && rotated == 2 && normal == 1;
    r.detail = fmt::format("bimodal={} sheared={} rotated={} standard normal={}", base, sheared, rotated, normal);
    return r;
}

CheckResult check_flow_correctness(CheckContext& ctx) {
    CheckResult r{9, "flow correctness", false, {}, 0.0};
    const auto t0 = Clock::now();
    const Flow& flow = ctx.ring_training().flow;
    const auto ring = AnalyticDensity::ring_mixture(20, 0.3, 1.0);
    const double lip = CheckContext::ring_config().lipschitz;

    const Points x = ring.sample(10000, 900);
    double round_trip = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i) {
        const auto z = flow.forward(x.row(i));
        const auto back = flow.inverse(z.point);
        round_trip = std::max(round_trip, distance(x.row(i), back.point));
    }

    // Points reaching each block's input, plus nearby and distant partners for the stretch ratios.
    Points pts = ring.sample(100, 901);
    Rng rng = make_rng(901, 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double fd_error = 0.0, lo = 1e300, hi = 0.0;
    std::vector<double> logdet(pts.count());
    std::vector<double> zx(2), zy(2), y(2);
    for (const auto& block : flow.blocks()) {
        for (std::size_t i = 0; i < pts.count(); ++i) {
            const double analytic = block.forward(pts.row(i), zx);
            fd_error = std::max(fd_error, std::abs(analytic - logdet_fd_check(block, pts.row(i), 1e-5)));
            for (int rep = 0; rep < 20; ++rep) {
                const std::size_t partner = (i + 1 + static_cast<std::size_t>(unit(rng) * 99.0)) % pts.count();
                if (rep % 2 == 0) {
                    const double radius = std::pow(10.0, -4.0 + 4.0 * unit(rng));
                    const double phi = 2.0 * std::numbers::pi * unit(rng);
                    y[0] = pts(i, 0) + radius * std::cos(phi);
                    y[1] = pts(i, 1) + radius * std::sin(phi);
                } else {
                    y[0] = pts(partner, 0);
                    y[1] = pts(partner, 1);
                }
                const double dx = distance(pts.row(i), y);
                if (dx == 0.0) continue;
                block.forward(y, zy);
                const double ratio = distance(zx, zy) / dx;
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
        }
        block.forward_batch(pts, logdet);
    }
    r.seconds = since(t0);
    r.passed = round_trip < 1e-8 && fd_error < 1e-5 && lo >= 1.0 / lip && hi <= lip;
    r.detail = fmt::format("{} blocks: round trip {:.2e}; logdet fd {:.2e}; stretch ratios [{:.3f}, {:.3f}] vs L={}",
                           flow.size(), round_trip, fd_error, lo, hi, lip);
    return r;
}

CheckResult check_decomposition(CheckContext&) {
    CheckResult r{10, "loss decomposition", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto condbi = resolve_target("conditional_bimodal");
    const std::vector<std::pair<std::string, AnalyticDensity>> targets = {
        {"standard_normal", AnalyticDensity::standard_normal(2)},
        {"gaussian_rho0.5", correlated_gaussian(0.5)},
        {"ring", AnalyticDensity::ring_mixture(20, 0.3, 1.0)},
        {"bimodal", AnalyticDensity::bimodal_gmm()},
        {"conditional_bimodal", condbi.density}};
    const auto identity = RotationLayer::identity(2);
    r.passed = true;
    std::string parts;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const bool last = k + 1 == targets.size();
        const Points x = targets[k].second.sample(std::size_t{1} << 20, 1000 + k);
        const auto kl = kl_to_standard_normal(x, log_densities(targets[k].second, x));
        DecomposeOptions options;
        options.scan_angles = last ? 12 : 0;
        const auto rep = decompose(x, identity, 64, options);
        const double diff = std::abs(rep.total - kl.value), se = rep.combined_se(kl.se);
        const bool ok = diff < 3.0 * se;
        r.passed = r.passed && ok;
        parts += fmt::format("{}{} {:.2f}se", parts.empty() ? "" : " ", targets[k].first, diff / se);
        if (!last) continue;

        const double oracle = mixture_negentropy(condbi.resolved["separation"].get<double>(),
                                                 condbi.resolved["sigma"].get<double>());
        const double jse = rep.combined_se();
        const bool j_ok = std::abs(rep.Jbar - oracle) < jse;
        const bool split_ok = std::abs((rep.delta_universal_at_q - rep.delta_affine_at_q) - rep.Jbar) < 1e-12;
        const bool order_ok = rep.delta_universal_star >= rep.delta_affine_star - 3.0 * rep.se_affine_star;
        r.passed = r.passed && j_ok && split_ok && order_ok;
        parts += fmt::format("; Jbar={:.4f} exact={:.4f} (se {:.1e}); at Q=I universal-affine={:.4f}; scan maxima "
                             "universal={:.4f} affine={:.4f} (gap {:.4f})",
                             rep.Jbar, oracle, jse, rep.delta_universal_at_q - rep.delta_affine_at_q,
                             rep.delta_universal_star, rep.delta_affine_star,
                             rep.delta_universal_star - rep.delta_affine_star);
    }
    r.seconds = since(t0);
    r.detail = "identity |diff|/se: " + parts;
    return r;
}

std::vector<CheckResult> run_checks(const std::vector<int>& ids, const std::function<void(const CheckResult&)>& on_result) {
    using Fn = CheckResult (*)(CheckContext&);
    static const Fn table[kCheckCount] = {check_counterexample,  check_bound_consistency, check_optimal_scale,
                                          check_gaussian_delta,  check_fixed_point,       check_greedy_ring,
                                          check_rearranged_delta, check_modes,            check_flow_correctness,
                                          check_decomposition};
    std::vector<int> order = ids;
    if (order.empty())
        for (int i = 1; i <= kCheckCount; ++i) order.push_back(i);
    CheckContext ctx;
    std::vector<CheckResult> out;
    for (int id : order) {
        if (id < 1 || id > kCheckCount) throw Error(fmt::format("checks: no check with id {}", id));
        CheckResult res;
        try {
            res = table[id - 1](ctx);
        } catch (const std::exception& e) {
            res.id = id;
            res.name = "check";
            res.passed = false;
            res.detail = std::string("error: ") + e.what();
        }
        if (on_result) on_result(res);
        out.push_back(std::move(res));
    }
    return out;
}

std::string format_check(const CheckResult& r) {
    return fmt::format("{}  {:2d}  {}  ({:.2f} s)  {}", r.passed ? "PASS" : "FAIL", r.id, r.name, r.seconds, r.detail);
}

}  // namespace flowlab
