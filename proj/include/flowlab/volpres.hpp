#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/densities.hpp"

namespace flowlab {

/// Cell permutation of a volume-preserving grid map followed by a global
/// dilation by `scale`.
struct SortedGridMap {
    std::vector<std::size_t> permutation;  // source cell index -> latent cell index
    double scale = 1.0;
};

/// Assigns the k-th heaviest source cell to the k-th heaviest latent cell.
/// Ties are broken by cell index. Grids must have equal cell counts and volumes.
SortedGridMap sorted_grid_map(const GridDensity& source, const GridDensity& latent);

/// sum_i p_i log(p_i / q_perm(i)), with 0 log 0 = 0.
double permutation_kl(std::span<const double> source, std::span<const double> latent,
                      std::span<const std::size_t> permutation);
double discrete_kl(const GridDensity& source, const GridDensity& latent, const SortedGridMap& map);

/// Exact cell masses of N(0, variance I) on the geometry of `geometry`
/// (products of 1D normal-CDF differences; not renormalized to the window).
GridDensity gaussian_cell_masses(const GridDensity& geometry, double variance);

/// Moves samples by the cell permutation, keeping their offset inside the cell.
/// Samples outside the source grid are dropped.
Points transport_samples(const SortedGridMap& map, const GridDensity& source, const GridDensity& latent,
                         const Points& samples);

struct LevelRow {
    double level = 0.0;             // density value v
    double superlevel_volume = 0.0; // |{p >= v}|
    double radius = 0.0;            // radius of the ball with that volume
};

/// Rotationally symmetric, radially non-increasing rearrangement p*(r) of a
/// grid density: cells sorted by density are laid out as concentric shells of
/// equal volume around the origin.
class RadialProfile {
public:
    RadialProfile(std::size_t dim, double cell_volume, std::vector<double> levels);

    std::size_t dim() const { return dim_; }
    double cell_volume() const { return cell_volume_; }
    /// Cell densities in non-increasing order; shell k spans volumes [k, k+1) * cell_volume.
    const std::vector<double>& levels() const { return levels_; }

    double max_density() const { return levels_.front(); }
    /// p*(r), interpolated linearly in enclosed volume between shell midpoints.
    double density_at(double radius) const;
    /// |{x : p(x) >= v}|
    double superlevel_volume(double level) const;
    double radius_of_volume(double volume) const;
    double volume_of_radius(double radius) const;

    double mass() const;
    /// E|x|^2 under p*.
    double second_moment() const;
    /// Per-coordinate variance of the isotropic p* (normalized by mass).
    double variance() const;
    double entropy() const;
    /// KL(p* || N(0, variance I)).
    double kl_to_isotropic_gaussian(double variance) const;

    /// Superlevel volumes at `count` log-spaced levels from p_max to p_max * floor.
    std::vector<LevelRow> level_table(std::size_t count = 256, double floor = 1e-6) const;

    Points sample(std::size_t n, std::uint64_t seed) const;

private:
    std::size_t dim_;
    double cell_volume_;
    std::vector<double> levels_;
    std::vector<double> cumulative_mass_;
    double unit_ball_ = 0.0;
};

RadialProfile radial_rearrangement(const GridDensity& source);
/// Rearrangement of an analytic 2D density via a `resolution`^2 grid on its support box.
RadialProfile radial_rearrangement(const AnalyticDensity& source, std::size_t resolution = 2048);

/// C = |Sigma_{p*}|^{-1/(2D)}.
double optimal_scale(const RadialProfile& profile, std::size_t dim);

struct CounterexampleRow {
    double jacobian = 0.0;      // constant |det f'| of the flow
    double volume_a = 0.0;      // |A|, zero when A is empty
    int case_id = 1;            // 1: A empty, 2: A non-empty
    double tv_bound = 0.0;
    double kl_bound = 0.0;
};

struct CounterexampleBounds {
    double epsilon = 0.1;
    double plateau = 0.9;
    double case1_bound = 0.0;           // 2 eps^2
    double case2_bound = 0.0;           // 2 (eps (1 - 1 / (e (plateau - eps))))^2
    double max_volume_a = 0.0;          // 1 / (e (plateau - eps))
    double argmax_jacobian = 0.0;       // 2 pi e (plateau - eps)
    double overall_bound = 0.0;         // min(case1, case2)
    double sweep_minimum = 0.0;         // min over the sweep rows
    std::vector<CounterexampleRow> sweep;
};

struct BoundReport {
    double lower_bound = 0.0;          // KL(p* || N(0, |Sigma|^{1/D} I))
    double optimal_scale = 1.0;        // C
    double covariance_det = 1.0;       // |Sigma_{p*}|
    double variance = 1.0;             // per-coordinate variance of p*
    double entropy = 0.0;              // H[p] = H[p*]
    double mass = 1.0;
    std::optional<double> achieved_kl; // discrete KL of the sorted grid map at scale C
    std::optional<CounterexampleBounds> counterexample;
};

BoundReport lower_bound_kl(const RadialProfile& profile, std::size_t dim);

/// Full grid construction: radial profile, optimal C, sorted map onto the
/// N(0, C^-2 I) cell masses, and the discrete KL it achieves.
struct VolumePreservingSolution {
    RadialProfile profile;
    GridDensity latent;
    SortedGridMap map;
    BoundReport report;
};
VolumePreservingSolution solve_volume_preserving(const GridDensity& source);

/// Sweep of constant Jacobians J over `jacobians` for the plateau-and-ramp target.
CounterexampleBounds counterexample_bounds(double epsilon, std::span<const double> jacobians, double plateau = 0.9);
/// `count` log-spaced Jacobians on [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t count);

/// Number of plateau modes under 8-neighbor connectivity (2D grids).
std::size_t count_modes(const GridDensity& grid);

/// Measure-preserving 2D diffeomorphism, given by forward and inverse maps.
struct MeasurePreservingMap {
    std::string name;
    std::function<std::array<double, 2>(double, double)> forward;
    std::function<std::array<double, 2>(double, double)> inverse;
};

MeasurePreservingMap identity_map();
MeasurePreservingMap rotation_map(double theta);
/// (x, y) -> (x, y + g(x)).
MeasurePreservingMap shear_map(std::function<double(double)> g, std::string name = "shear");

/// Density of the pushforward resampled on the same grid through the inverse
/// map. Fails when more than 0.5% of the mass leaves the grid.
GridDensity pushforward_grid(const GridDensity& grid, const MeasurePreservingMap& map);

}  // namespace flowlab
