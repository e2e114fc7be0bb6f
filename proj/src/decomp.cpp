#include "flowlab/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <fmt/format.h>

#include "flowlab/parallel.hpp"

namespace flowlab {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;
constexpr std::size_t kMaxHalvings = 6;

struct Counts {
    std::vector<std::size_t> cells;
    std::vector<std::size_t> index;  // cell of each sample
    std::size_t empty = 0;
    std::size_t singletons = 0;  // samples alone in their cell
};

// Number of cells of the given width, capped at `limit` + 1.
std::size_t cell_count(double span, double width, std::size_t limit) {
    const double k = std::floor(span / width) + 1.0;
    return k > static_cast<double>(limit) ? limit + 1 : static_cast<std::size_t>(k);
}

Counts histogram(std::span<const double> x, double lo, double width) {
    const double span = x.empty() ? 0.0 : *std::max_element(x.begin(), x.end()) - lo;
    const auto k = static_cast<std::size_t>(std::floor(span / width)) + 1;
    Counts c;
    c.cells.assign(k, 0);
    c.index.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto j = std::min(static_cast<std::size_t>((x[i] - lo) / width), k - 1);
        c.index[i] = j;
        ++c.cells[j];
    }
    c.empty = static_cast<std::size_t>(std::count(c.cells.begin(), c.cells.end(), std::size_t{0}));
    c.singletons = static_cast<std::size_t>(std::count(c.cells.begin(), c.cells.end(), std::size_t{1}));
    return c;
}

// h^2 / 24 * I, where I = int p'^2 / p from central differences of the counts.
// Subtracting c+ + c- removes the Poisson noise in (c+ - c-)^2.
double smoothing_bias(const std::vector<std::size_t>& cells, std::size_t n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (cells[k] == 0) continue;
        const double up = k + 1 < cells.size() ? static_cast<double>(cells[k + 1]) : 0.0;
        const double down = k > 0 ? static_cast<double>(cells[k - 1]) : 0.0;
        acc += ((up - down) * (up - down) - (up + down)) / static_cast<double>(cells[k]);
    }
    return acc / (96.0 * static_cast<double>(n));
}

double grassberger(std::size_t count) {
    using boost::math::digamma;
    const double c = static_cast<double>(count);
    const double sign = (count % 2 == 0) ? 1.0 : -1.0;
    return digamma(c) + 0.5 * sign * (digamma(0.5 * (c + 1.0)) - digamma(0.5 * c));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Pair {
    double b;
    double a;
};

struct Terms {
    double P = 0.0, J = 0.0, S = 0.0;
    double se_P = 0.0, se_J = 0.0, se_S = 0.0;
    std::vector<DecompositionBin> bins;
};

double sample_variance(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / (n - 1.0);
}

Terms evaluate(std::vector<Pair>& pairs, std::size_t bins, double tolerance, bool with_passive) {
    const std::size_t n = pairs.size();
    std::sort(pairs.begin(), pairs.end(), [](const Pair& l, const Pair& r) { return l.b < r.b; });
    Terms t;
    if (with_passive) {
        std::vector<double> b(n);
        for (std::size_t i = 0; i < n; ++i) b[i] = pairs[i].b;
        const auto hb = histogram_entropy(b, tolerance);
        double second = 0.0;
        std::vector<double> influence(n);
        for (std::size_t i = 0; i < n; ++i) {
            second += b[i] * b[i];
            influence[i] = hb.log_density[i] + 0.5 * b[i] * b[i];
        }
        t.P = -hb.entropy + kHalfLog2Pi + 0.5 * second / static_cast<double>(n);
        t.se_P = std::sqrt(sample_variance(influence) / static_cast<double>(n));
    }

    t.bins.resize(bins);
    std::vector<double> var_j(bins), var_s(bins);
    std::vector<std::string> failures(bins);
    parallel_chunks(bins, 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const std::size_t lo = j * n / bins, hi = (j + 1) * n / bins;
            const std::size_t nj = hi - lo;
            std::vector<double> a(nj);
            double sum_b = 0.0, sum_a = 0.0;
            for (std::size_t i = 0; i < nj; ++i) {
                a[i] = pairs[lo + i].a;
                sum_b += pairs[lo + i].b;
                sum_a += a[i];
            }
            const double dn = static_cast<double>(nj);
            const double m = sum_a / dn;
            double ss = 0.0;
            for (double v : a) ss += (v - m) * (v - m);
            const double s2 = ss / dn;
            HistogramEntropy ha;
            try {
                if (!(s2 > 0.0)) throw Error("active coordinate has zero spread");
                ha = histogram_entropy(a, tolerance);
            } catch (const Error& e) {
                failures[j] = e.what();
                continue;
            }
            auto& row = t.bins[j];
            row.center = sum_b / dn;
            row.mean = m;
            row.sd = std::sqrt(s2);
            row.S = 0.5 * (m * m + s2 - 1.0 - std::log(s2));
            row.J = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * s2) - ha.entropy;
            // Delta-method influence functions of S_j and J_j.
            std::vector<double> inf_s(nj), inf_j(nj);
            for (std::size_t i = 0; i < nj; ++i) {
                const double d = a[i] - m;
                inf_s[i] = m * d + 0.5 * (1.0 - 1.0 / s2) * (d * d - s2);
                inf_j[i] = ha.log_density[i] + 0.5 * d * d / s2;
            }
            var_s[j] = sample_variance(inf_s) / dn;
            var_j[j] = sample_variance(inf_j) / dn;
        }
    });
    for (std::size_t j = 0; j < bins; ++j)
        if (!failures[j].empty()) throw Error(fmt::format("decompose: bin {}: {}", j, failures[j]));

    const double inv_b = 1.0 / static_cast<double>(bins);
    double vj = 0.0, vs = 0.0;
    for (std::size_t j = 0; j < bins; ++j) {
        t.J += inv_b * t.bins[j].J;
        t.S += inv_b * t.bins[j].S;
        vj += var_j[j];
        vs += var_s[j];
    }
    t.se_J = std::sqrt(vj) * inv_b;
    t.se_S = std::sqrt(vs) * inv_b;
    return t;
}

std::vector<Pair> rotate(const Points& samples, const RotationLayer& q) {
    const double q00 = q(0, 0), q01 = q(0, 1), q10 = q(1, 0), q11 = q(1, 1);
    std::vector<Pair> pairs(samples.count());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double x0 = samples(i, 0), x1 = samples(i, 1);
        pairs[i] = {q00 * x0 + q01 * x1, q10 * x0 + q11 * x1};
    }
    return pairs;
}

}  // namespace

HistogramEntropy histogram_entropy(std::span<const double> x, double smoothing_tolerance) {
    const std::size_t n = x.size();
    if (n < 16) throw Error(fmt::format("histogram_entropy: need at least 16 samples, got {}", n));
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    if (!(sorted.back() > lo)) throw Error("histogram_entropy: samples have no spread");
    double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    if (!(iqr > 0.0)) iqr = 1.349 * std::sqrt(sample_variance(sorted));
    double width = 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(n));

    // Underflow: the histogram would need more than 4 cells per sample, or most
    // samples sit alone in their cell. Empty runs between separated modes are fine.
    const std::size_t max_cells = 4 * n;
    const double span = sorted.back() - lo;
    if (cell_count(span, width, max_cells) > max_cells)
        throw Error(fmt::format("histogram_entropy: histogram underflow (range {:.3g} spans more than {} cells)", span,
                                max_cells));
    HistogramEntropy out;
    Counts counts = histogram(x, lo, width);
    if (2 * counts.singletons > n)
        throw Error(fmt::format("histogram_entropy: histogram underflow ({} of {} samples alone in their cell)",
                                counts.singletons, n));
    double bias = smoothing_bias(counts.cells, n);
    while (bias > smoothing_tolerance && out.halvings < kMaxHalvings) {
        if (cell_count(span, 0.5 * width, max_cells) > max_cells) break;
        Counts finer = histogram(x, lo, 0.5 * width);
        if (2 * finer.singletons > n) break;
        width *= 0.5;
        counts = std::move(finer);
        bias = smoothing_bias(counts.cells, n);
        ++out.halvings;
    }

    std::vector<double> g_cache;
    double acc = 0.0;
    for (auto c : counts.cells) {
        if (c == 0) continue;
        if (c >= g_cache.size()) {
            const std::size_t old = g_cache.size();
            g_cache.resize(c + 1);
            for (std::size_t k = std::max<std::size_t>(old, 1); k <= c; ++k) g_cache[k] = grassberger(k);
        }
        acc += static_cast<double>(c) * g_cache[c];
    }
    const double dn = static_cast<double>(n);
    out.entropy = std::log(dn) - acc / dn + std::log(width) - bias;
    out.width = width;
    out.cells = counts.cells.size();
    out.empty_cells = counts.empty;
    out.smoothing_correction = bias;
    out.log_density.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.log_density[i] = std::log(static_cast<double>(counts.cells[counts.index[i]]) / (dn * width));
    return out;
}

double DecompositionReport::combined_se(double extra_se) const {
    return std::sqrt(se_P * se_P + se_J * se_J + se_S * se_S + extra_se * extra_se);
}

DecompositionReport decompose(const Points& samples, const RotationLayer& rotation, std::size_t bins,
                              const DecomposeOptions& options) {
    if (samples.dim() != 2 || rotation.dim() != 2) throw Error("decompose: two-dimensional samples and rotation required");
    if (bins == 0) throw Error("decompose: bin count must be positive");
    const std::size_t n = samples.count();
    if (n / bins < 512)
        throw Error(fmt::format("decompose: need at least 512 samples per bin ({} samples, {} bins)", n, bins));

    DecompositionReport r;
    r.samples = n;
    r.bins = bins;
    r.angle = rotation.angle();
    auto pairs = rotate(samples, rotation);
    auto t = evaluate(pairs, bins, options.smoothing_tolerance, true);
    r.P = t.P;
    r.Jbar = t.J;
    r.Sbar = t.S;
    r.Dbar = 0.0;
    r.total = r.P + r.Jbar + r.Sbar + r.Dbar;
    r.se_P = t.se_P;
    r.se_J = t.se_J;
    r.se_S = t.se_S;
    r.per_bin = std::move(t.bins);
    r.delta_affine_at_q = r.Sbar;
    r.delta_universal_at_q = r.Jbar + r.Sbar;

    r.delta_affine_star = r.delta_affine_at_q;
    r.delta_universal_star = r.delta_universal_at_q;
    r.se_affine_star = r.se_S;
    r.se_universal_star = std::hypot(r.se_J, r.se_S);
    r.angle_affine_star = r.angle_universal_star = r.angle;
    r.scan_angles.push_back(r.angle);
    r.scan_affine.push_back(r.delta_affine_at_q);
    r.scan_universal.push_back(r.delta_universal_at_q);
    for (std::size_t k = 0; k < options.scan_angles; ++k) {
        const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(options.scan_angles);
        auto rotated = rotate(samples, RotationLayer::from_angle(theta));
        Terms s;
        try {
            s = evaluate(rotated, bins, options.smoothing_tolerance, false);
        } catch (const Error& e) {
            throw Error(fmt::format("decompose: scan angle {:.4f}: {}", theta, e.what()));
        }
        r.scan_angles.push_back(theta);
        r.scan_affine.push_back(s.S);
        r.scan_universal.push_back(s.J + s.S);
        if (s.S > r.delta_affine_star) {
            r.delta_affine_star = s.S;
            r.se_affine_star = s.se_S;
            r.angle_affine_star = theta;
        }
        if (s.J + s.S > r.delta_universal_star) {
            r.delta_universal_star = s.J + s.S;
            r.se_universal_star = std::hypot(s.se_J, s.se_S);
            r.angle_universal_star = theta;
        }
    }
    return r;
}

Estimate kl_to_standard_normal(const Points& samples, std::span<const double> log_density) {
    const std::size_t n = samples.count();
    if (n < 2 || log_density.size() != n) throw Error("kl_to_standard_normal: need at least two samples with log-densities");
    const std::size_t dim = samples.dim();
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) r2 += samples(i, k) * samples(i, k);
        const double term = log_density[i] + 0.5 * r2 + static_cast<double>(dim) * kHalfLog2Pi;
        sum += term;
        sum_sq += term * term;
    }
    const double dn = static_cast<double>(n);
    const double mean = sum / dn;
    const double var = std::max(0.0, (sum_sq - dn * mean * mean) / (dn - 1.0));
    return {mean, std::sqrt(var / dn)};
}

}  // namespace flowlab
