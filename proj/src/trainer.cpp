#include "flowlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "flowlab/parallel.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

namespace {

struct PassiveActive {
    double b;
    double a;
};

// Streams of the trainer's seed; keep fixed so traces stay reproducible.
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kSampleStreamBase = 1'000'000;
constexpr std::uint64_t kRotationStreamBase = 2'000'000;

std::size_t bin_start(std::size_t j, std::size_t n, std::size_t bins) { return (j * n) / bins; }

// Partially orders `pairs` by b so that each equal-count bin holds the right
// samples (order inside a bin is arbitrary).
void partition_bins(std::vector<PassiveActive>& pairs, std::size_t first_bin, std::size_t last_bin,
                    std::size_t bins) {
    if (last_bin - first_bin <= 1) return;
    const std::size_t n = pairs.size();
    const std::size_t mid_bin = first_bin + (last_bin - first_bin) / 2;
    const auto lo = pairs.begin() + static_cast<std::ptrdiff_t>(bin_start(first_bin, n, bins));
    const auto mid = pairs.begin() + static_cast<std::ptrdiff_t>(bin_start(mid_bin, n, bins));
    const auto hi = pairs.begin() + static_cast<std::ptrdiff_t>(bin_start(last_bin, n, bins));
    std::nth_element(lo, mid, hi, [](const PassiveActive& l, const PassiveActive& r) { return l.b < r.b; });
    partition_bins(pairs, first_bin, mid_bin, bins);
    partition_bins(pairs, mid_bin, last_bin, bins);
}

}  // namespace

std::size_t MomentTable::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

MomentTable fit_moment_table(const Points& samples, const RotationLayer& rotation, std::size_t bins) {
    if (samples.dim() != 2 || rotation.dim() != 2)
        throw Error("fit_moment_table: two-dimensional samples and rotation required");
    if (bins == 0) throw Error("fit_moment_table: bin count must be positive");
    const std::size_t n = samples.count();
    if (n < 32 * bins)
        throw Error(fmt::format("fit_moment_table: need at least 32 samples per bin ({} < 32 * {})", n, bins));

    const double q00 = rotation(0, 0), q01 = rotation(0, 1), q10 = rotation(1, 0), q11 = rotation(1, 1);
    std::vector<PassiveActive> pairs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = samples(i, 0), x1 = samples(i, 1);
        pairs[i] = {q00 * x0 + q01 * x1, q10 * x0 + q11 * x1};
    }
    partition_bins(pairs, 0, bins, bins);

    MomentTable t;
    t.counts.resize(bins);
    t.centers.resize(bins);
    t.means.resize(bins);
    t.sds.resize(bins);
    std::vector<double> lows(bins), highs(bins);
    for (std::size_t j = 0; j < bins; ++j) {
        const std::size_t begin = bin_start(j, n, bins), end = bin_start(j + 1, n, bins);
        const double count = static_cast<double>(end - begin);
        double sum_b = 0.0, sum_a = 0.0;
        double lo = pairs[begin].b, hi = pairs[begin].b;
        for (std::size_t i = begin; i < end; ++i) {
            sum_b += pairs[i].b;
            sum_a += pairs[i].a;
            lo = std::min(lo, pairs[i].b);
            hi = std::max(hi, pairs[i].b);
        }
        const double mean_a = sum_a / count;
        double ss = 0.0;
        for (std::size_t i = begin; i < end; ++i) ss += (pairs[i].a - mean_a) * (pairs[i].a - mean_a);
        const double sd = std::sqrt(ss / count);
        if (!(sd > 1e-12 * (1.0 + std::abs(mean_a))))
            throw Error(fmt::format("fit_moment_table: bin {} has zero spread in the active coordinate", j));
        t.counts[j] = end - begin;
        t.centers[j] = sum_b / count;
        t.means[j] = mean_a;
        t.sds[j] = sd;
        lows[j] = lo;
        highs[j] = hi;
    }
    t.edges.resize(bins + 1);
    t.edges.front() = lows.front();
    t.edges.back() = highs.back();
    for (std::size_t j = 1; j < bins; ++j) t.edges[j] = 0.5 * (highs[j - 1] + lows[j]);
    return t;
}

DeltaTerms delta_terms(const MomentTable& table) {
    DeltaTerms d;
    const double total = static_cast<double>(table.total());
    for (std::size_t j = 0; j < table.bins(); ++j) {
        const double w = static_cast<double>(table.counts[j]) / total;
        const double m = table.means[j];
        const double var = table.sds[j] * table.sds[j];
        d.mean_term += 0.5 * w * m * m;
        d.variance_term += 0.5 * w * (var - 1.0 - std::log(var));
    }
    return d;
}

DeltaTerms delta_affine_terms(const Points& samples, const RotationLayer& rotation, std::size_t bins) {
    return delta_terms(fit_moment_table(samples, rotation, bins));
}

double delta_affine_hat(const Points& samples, const RotationLayer& rotation, std::size_t bins) {
    return delta_affine_terms(samples, rotation, bins).total();
}

CouplingBlock build_block(const MomentTable& table, const RotationLayer& rotation, double damping,
                          double lipschitz) {
    const std::size_t bins = table.bins();
    if (bins == 0 || table.centers.size() != bins || table.means.size() != bins || table.sds.size() != bins)
        throw Error("build_block: malformed moment table");
    std::vector<double> scales(bins), shifts(bins);
    for (std::size_t j = 0; j < bins; ++j) {
        if (!(table.sds[j] > 0.0)) throw Error(fmt::format("build_block: bin {} has non-positive spread", j));
        scales[j] = 1.0 / table.sds[j];
        shifts[j] = -table.means[j] / table.sds[j];
    }
    return CouplingBlock(rotation, SplineConditioner(table.centers, std::move(scales), std::move(shifts)), damping,
                         lipschitz);
}

RotationChoice select_rotation(const Points& samples, std::size_t candidates, std::uint64_t seed, std::size_t bins) {
    if (candidates == 0) throw Error("select_rotation: need at least one candidate");
    Rng rng(substream_seed(seed, 0));
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    RotationChoice choice;
    choice.candidate_angles.resize(candidates);
    for (auto& a : choice.candidate_angles) a = angle(rng);
    choice.candidate_deltas.resize(candidates);
    std::vector<DeltaTerms> terms(candidates);
    parallel_chunks(candidates, 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            terms[c] = delta_affine_terms(samples, RotationLayer::from_angle(choice.candidate_angles[c]), bins);
            choice.candidate_deltas[c] = terms[c].total();
        }
    });
    const auto best = static_cast<std::size_t>(
        std::max_element(choice.candidate_deltas.begin(), choice.candidate_deltas.end()) -
        choice.candidate_deltas.begin());
    choice.angle = choice.candidate_angles[best];
    choice.rotation = RotationLayer::from_angle(choice.angle);
    choice.delta = terms[best];
    return choice;
}

void TrainerConfig::validate() const {
    if (bins == 0) throw Error("config: bins must be positive");
    if (samples / bins < 32) throw Error("config: samples / bins must be at least 32");
    if (!(damping > 0.0 && damping <= 1.0)) throw Error("config: damping must lie in (0, 1]");
    if (rotation_candidates < 1) throw Error("config: rotation_candidates must be at least 1");
    if (!(lipschitz > 1.0)) throw Error("config: lipschitz must exceed 1");
    if (kl_samples < 2) throw Error("config: kl_samples must be at least 2");
}

Estimate kl_hat(const Flow& flow, const Points& samples, std::span<const double> target_log_density) {
    const std::size_t n = samples.count();
    if (n < 2 || target_log_density.size() != n) throw Error("kl_hat: need at least two samples with log-densities");
    Points z = samples;
    const auto logdet = flow.forward_batch(z);
    constexpr double kHalfLog2Pi = 0.91893853320467274;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double log_latent = -0.5 * (z(i, 0) * z(i, 0) + z(i, 1) * z(i, 1)) - 2.0 * kHalfLog2Pi;
        const double term = target_log_density[i] - (log_latent + logdet[i]);
        if (!std::isfinite(term)) throw Error(fmt::format("kl_hat: non-finite summand at sample {} (defect)", i));
        sum += term;
        sum_sq += term * term;
    }
    const double dn = static_cast<double>(n);
    const double mean = sum / dn;
    // Jackknife SE of a sample mean reduces to s / sqrt(n).
    const double var = std::max(0.0, (sum_sq - dn * mean * mean) / (dn - 1.0));
    return {mean, std::sqrt(var / dn)};
}

Estimate kl_hat(const Flow& flow, const AnalyticDensity& target, std::size_t n, std::uint64_t seed) {
    if (target.dim() != 2) throw Error("kl_hat: two-dimensional targets only");
    const Points x = target.sample(n, seed);
    std::vector<double> logp(n);
    for (std::size_t i = 0; i < n; ++i) logp[i] = target.log_density(x.row(i));
    return kl_hat(flow, x, logp);
}

TrainResult greedy_train(const AnalyticDensity& target, const TrainerConfig& config, const TrainProgress& progress) {
    config.validate();
    if (target.dim() != 2) throw Error("greedy_train: two-dimensional targets only");
    using Clock = std::chrono::steady_clock;

    const Points eval = target.sample(config.kl_samples, substream_seed(config.seed, kEvalStream));
    std::vector<double> eval_logp(eval.count());
    for (std::size_t i = 0; i < eval.count(); ++i) eval_logp[i] = target.log_density(eval.row(i));

    TrainResult result;
    Points current;
    for (std::size_t n = 0; n <= config.blocks; ++n) {
        const auto start = Clock::now();
        if (n == 0 || config.resample_each_step) {
            current = target.sample(config.samples, substream_seed(config.seed, kSampleStreamBase + n));
            result.flow.forward_batch(current);
        } else {
            std::vector<double> unused(current.count(), 0.0);
            result.flow.blocks().back().forward_batch(current, unused);
        }

        TraceRecord rec;
        rec.block = n;
        const auto kl = kl_hat(result.flow, eval, eval_logp);
        rec.kl_hat = kl.value;
        rec.kl_se = kl.se;
        if (n > 0) rec.realized_decrease = result.trace.records.back().kl_hat - kl.value;

        RotationChoice choice;
        try {
            choice = select_rotation(current, config.rotation_candidates,
                                     substream_seed(config.seed, kRotationStreamBase + n), config.bins);
        } catch (const Error& e) {
            throw Error(fmt::format("greedy_train: block {}: {}", n, e.what()));
        }
        rec.delta_hat = choice.delta.total();
        rec.delta_mean_term = choice.delta.mean_term;
        rec.delta_variance_term = choice.delta.variance_term;
        rec.angle = choice.angle;

        if (n < config.blocks) {
            try {
                const auto table = fit_moment_table(current, choice.rotation, config.bins);
                result.flow.push_back(build_block(table, choice.rotation, config.damping, config.lipschitz));
            } catch (const Error& e) {
                throw Error(fmt::format("greedy_train: block {}: {}", n, e.what()));
            }
        }
        rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        result.trace.records.push_back(rec);
        if (progress) progress(rec);
    }
    return result;
}

}  // namespace flowlab
