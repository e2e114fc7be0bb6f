#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/densities.hpp"
#include "flowlab/flow.hpp"

namespace flowlab {

/// Conditional moments of the active coordinate a over equal-count bins of the
/// passive coordinate b, where (b, a) = Q x.
struct MomentTable {
    std::vector<double> edges;         // B + 1 bin boundaries over b
    std::vector<std::size_t> counts;   // samples per bin
    std::vector<double> centers;       // mean of b within each bin
    std::vector<double> means;         // m_j, mean of a within each bin
    std::vector<double> sds;           // sigma_j, standard deviation of a within each bin

    std::size_t bins() const { return counts.size(); }
    std::size_t total() const;
};

/// The two halves of the binned improvement estimate: mean term
/// 1/2 E_b[m^2] and variance term 1/2 E_b[sigma^2 - 1 - log sigma^2].
struct DeltaTerms {
    double mean_term = 0.0;
    double variance_term = 0.0;

    double total() const { return mean_term + variance_term; }
};

/// Requires N >= 32 B. Throws naming the bin if some bin has zero spread in a.
MomentTable fit_moment_table(const Points& samples, const RotationLayer& rotation, std::size_t bins);

DeltaTerms delta_terms(const MomentTable& table);
DeltaTerms delta_affine_terms(const Points& samples, const RotationLayer& rotation, std::size_t bins);
/// Plug-in estimate of the loss improvement one affine coupling block can
/// achieve after `rotation`.
double delta_affine_hat(const Points& samples, const RotationLayer& rotation, std::size_t bins);

/// Coupling block normalizing each bin: knots s_j = 1 / sigma_j, t_j = -m_j / sigma_j.
CouplingBlock build_block(const MomentTable& table, const RotationLayer& rotation, double damping,
                          double lipschitz);

struct RotationChoice {
    RotationLayer rotation;
    double angle = 0.0;
    DeltaTerms delta;
    std::vector<double> candidate_angles;
    std::vector<double> candidate_deltas;
};

/// Best of `candidates` uniformly random 2D rotations (angles on [0, pi)) by
/// delta_affine_hat. Deterministic in `seed`.
RotationChoice select_rotation(const Points& samples, std::size_t candidates, std::uint64_t seed,
                               std::size_t bins = 64);

struct TrainerConfig {
    std::size_t samples = std::size_t{1} << 18;
    std::size_t bins = 64;
    std::size_t blocks = 100;
    double damping = 0.5;
    std::size_t rotation_candidates = 10;
    double lipschitz = 20.0;
    std::uint64_t seed = 0;
    bool resample_each_step = true;
    std::size_t kl_samples = 100000;

    /// Throws Error naming the offending key.
    void validate() const;
};

/// State of the flow after `block` blocks. `delta_hat` is measured on that
/// state at the best candidate rotation (the raw predicted improvement of the
/// next block); `realized_decrease` is the KL drop caused by block `block`.
struct TraceRecord {
    std::size_t block = 0;
    double delta_hat = 0.0;
    double delta_mean_term = 0.0;
    double delta_variance_term = 0.0;
    double kl_hat = 0.0;
    double kl_se = 0.0;
    double angle = 0.0;
    double seconds = 0.0;
    double realized_decrease = 0.0;
};

struct TrainTrace {
    std::vector<TraceRecord> records;  // records[n] describes the n-block flow, n = 0..blocks
};

struct TrainResult {
    Flow flow;
    TrainTrace trace;
};

/// Monte-Carlo KL(p || p_theta) = E_p[log p(x) - log p_theta(x)] with a
/// standard-normal latent; standard error is the jackknife SE of the mean.
Estimate kl_hat(const Flow& flow, const AnalyticDensity& target, std::size_t n, std::uint64_t seed);

/// Same estimate on fixed samples with precomputed target log-densities.
Estimate kl_hat(const Flow& flow, const Points& samples, std::span<const double> target_log_density);

using TrainProgress = std::function<void(const TraceRecord&)>;

/// Greedy layer-wise construction: each block is fitted to the current latent
/// samples with all earlier blocks frozen.
TrainResult greedy_train(const AnalyticDensity& target, const TrainerConfig& config,
                         const TrainProgress& progress = {});

}  // namespace flowlab
