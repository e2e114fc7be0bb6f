#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/flow.hpp"

namespace flowlab {

/// 1D differential entropy from a histogram.
///
/// The width starts at the Freedman-Diaconis value 2 IQR n^(-1/3) and is halved
/// (at most 6 times) while the estimated binning bias h^2 I / 24 exceeds
/// `smoothing_tolerance`, I being a finite-difference Fisher information.
/// Counts use Grassberger's digamma correction; the binning bias is subtracted.
struct HistogramEntropy {
    double entropy = 0.0;
    double width = 0.0;
    std::size_t cells = 0;
    std::size_t empty_cells = 0;
    std::size_t halvings = 0;
    double smoothing_correction = 0.0;
    std::vector<double> log_density;  // histogram log-density at each input sample
};

/// Throws when fewer than 16 samples are given, the data have no spread, or the
/// Freedman-Diaconis histogram underflows: more than 4 n cells, or more than
/// half the samples alone in their cell. Halving stops before either happens.
HistogramEntropy histogram_entropy(std::span<const double> x, double smoothing_tolerance = 0.005);

/// Per-bin terms of the decomposition for one equal-count bin of b.
struct DecompositionBin {
    double center = 0.0;  // mean of b
    double mean = 0.0;    // m
    double sd = 1.0;      // sigma
    double S = 0.0;       // 1/2 (m^2 + sigma^2 - 1 - log sigma^2)
    double J = 0.0;       // 1/2 log(2 pi e sigma^2) - h(a | bin)
};

/// Loss decomposition of two-dimensional latent samples at rotation Q:
/// KL(p || N(0, I)) = P + E_b[J(b) + S(b)] (+ D, which vanishes in 2D).
struct DecompositionReport {
    std::size_t samples = 0;
    std::size_t bins = 0;
    double angle = 0.0;

    double P = 0.0;
    double Jbar = 0.0;
    double Sbar = 0.0;
    double Dbar = 0.0;
    double total = 0.0;
    double se_P = 0.0;
    double se_J = 0.0;
    double se_S = 0.0;

    /// Improvements at the supplied rotation: Sbar and Jbar + Sbar.
    double delta_affine_at_q = 0.0;
    double delta_universal_at_q = 0.0;
    /// Maxima over the rotation scan (supplied rotation included) and their SEs.
    double delta_affine_star = 0.0;
    double delta_universal_star = 0.0;
    double se_affine_star = 0.0;
    double se_universal_star = 0.0;
    double angle_affine_star = 0.0;
    double angle_universal_star = 0.0;
    std::vector<double> scan_angles;
    std::vector<double> scan_affine;
    std::vector<double> scan_universal;

    std::vector<DecompositionBin> per_bin;

    /// Root-sum-square of the component standard errors, plus `extra_se` if given.
    double combined_se(double extra_se = 0.0) const;
};

struct DecomposeOptions {
    /// Uniform angles k pi / n on [0, pi) scanned for the starred improvements; 0 disables the scan.
    std::size_t scan_angles = 12;
    double smoothing_tolerance = 0.005;
};

/// Requires D = 2 and N / B >= 512.
DecompositionReport decompose(const Points& samples, const RotationLayer& rotation, std::size_t bins,
                              const DecomposeOptions& options = {});

/// Monte-Carlo KL(p || N(0, I)) from samples of p and their exact log-densities.
Estimate kl_to_standard_normal(const Points& samples, std::span<const double> log_density);

}  // namespace flowlab
