#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowlab/common.hpp"

namespace flowlab {

enum class DensityKind { gaussian, gmm, ring_mixture, box_counterexample };

std::string to_string(DensityKind kind);

struct GaussianComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> covariance;  // row-major D x D, symmetric positive definite
};

/// Parameters of the plateau-and-ramp counterexample density: value `plateau`
/// on [-0.5, 0.5]^2, decaying linearly with slope `slope` to zero outside.
struct BoxParams {
    double plateau = 0.9;
    double slope = 0.0;
    double epsilon = 0.1;

    /// Width of the linear ramp, plateau / slope.
    double ramp_width() const { return plateau / slope; }
};

struct RingParams {
    std::size_t count = 20;
    double sigma = 0.3;
    double radius = 1.0;
};

/// Target or latent distribution with exact log-density and sampling.
///
/// Gaussians and ring mixtures are stored as mixtures; the box counterexample
/// is two-dimensional and evaluated piecewise. Immutable after construction.
class AnalyticDensity {
public:
    static AnalyticDensity gaussian(std::vector<double> mean, std::vector<double> covariance);
    static AnalyticDensity standard_normal(std::size_t dim);
    static AnalyticDensity gmm(std::vector<GaussianComponent> components);
    /// `count` isotropic Gaussians of scale `sigma` with means on a circle of radius `radius`.
    static AnalyticDensity ring_mixture(std::size_t count, double sigma, double radius = 1.0);
    /// Plateau-and-ramp density; the slope is solved so that the density integrates to one.
    static AnalyticDensity box_counterexample(double plateau = 0.9, double epsilon = 0.1);
    /// Equal-weight two-mode mixture: means (-0.5,-0.5), (0.5,0.5); covariances 0.2 I and 0.1 I.
    static AnalyticDensity bimodal_gmm();

    DensityKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    const std::vector<GaussianComponent>& components() const { return components_; }
    const RingParams& ring() const { return ring_; }
    const BoxParams& box() const { return box_; }

    /// log p(x); -infinity where p(x) = 0.
    double log_density(std::span<const double> x) const;
    double density(std::span<const double> x) const;

    /// n i.i.d. samples. Sampling is chunked with per-chunk substreams, so the
    /// output depends only on (n, seed).
    Points sample(std::size_t n, std::uint64_t seed) const;

    std::vector<double> mean() const;
    std::vector<double> covariance() const;

    /// Box holding all but a negligible (< 1e-15) fraction of the mass; the
    /// exact support for the box density.
    Box support_box() const;

private:
    struct Prepared {
        double log_norm = 0.0;           // log(weight) - D/2 log 2pi - 1/2 log|Sigma|
        std::vector<double> cholesky;    // lower triangular factor, row-major
        std::vector<double> precision;   // inverse covariance, row-major
    };

    AnalyticDensity() = default;
    void prepare();
    double box_value(double x, double y) const;

    DensityKind kind_ = DensityKind::gaussian;
    std::size_t dim_ = 0;
    std::vector<GaussianComponent> components_;
    std::vector<Prepared> prepared_;
    RingParams ring_;
    BoxParams box_;
};

/// Analytic integral of the plateau-and-ramp density for a given slope.
double counterexample_mass(double plateau, double slope);

/// Slope k at which the plateau-and-ramp density integrates to one.
/// Requires plateau in (0, 1); plateau >= 1 leaves no mass for the ramps.
double counterexample_normalizer(double plateau = 0.9);

/// Probability masses on a regular grid. Cells are indexed row-major with the
/// last axis fastest; `origin` is the lower corner of cell 0.
struct GridDensity {
    std::vector<double> origin;
    std::vector<double> spacing;
    std::vector<std::size_t> extents;
    std::vector<double> masses;

    std::size_t dim() const { return extents.size(); }
    std::size_t cell_count() const;
    double cell_volume() const;
    double total_mass() const;

    std::vector<std::size_t> unflatten(std::size_t index) const;
    std::size_t flatten(std::span<const std::size_t> multi) const;
    std::vector<double> cell_center(std::size_t index) const;
    /// Mass per unit volume of a cell.
    double cell_density(std::size_t index) const { return masses[index] / cell_volume(); }

    /// Density at a 2D point by bilinear interpolation between cell centers;
    /// zero outside the grid.
    double interpolate_density(double x, double y) const;

    void normalize();
    /// Sum of masses over cells whose centers fall inside `region`.
    double mass_in(const Box& region) const;
    Box bounds() const;
};

/// Midpoint-rule discretization followed by normalization. Fails when the grid
/// covers less than `min_coverage` of the probability mass.
GridDensity discretize(const AnalyticDensity& density, std::vector<double> origin,
                       std::vector<double> spacing, std::vector<std::size_t> extents,
                       double min_coverage = 0.999);

/// Probability mass of `density` inside a 2D `box` by adaptive quadrature.
double quadrature_mass(const AnalyticDensity& density, const Box& box, double tol = 1e-8);

}  // namespace flowlab
