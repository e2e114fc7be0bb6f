#pragma once

#include <span>
#include <vector>

#include "flowlab/common.hpp"
#include "flowlab/densities.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/spline.hpp"

namespace flowlab {

/// Orthogonal D x D matrix with determinant +1, stored row-major.
class RotationLayer {
public:
    RotationLayer() : RotationLayer(identity(2)) {}

    static RotationLayer identity(std::size_t dim);
    /// 2D rotation [[cos, -sin], [sin, cos]].
    static RotationLayer from_angle(double theta);
    /// Haar-distributed element of SO(D).
    static RotationLayer haar(std::size_t dim, Rng& rng);
    /// Validates orthogonality and det = +1 to 1e-10.
    static RotationLayer from_matrix(std::size_t dim, std::vector<double> row_major);

    std::size_t dim() const { return dim_; }
    const std::vector<double>& matrix() const { return q_; }
    double operator()(std::size_t i, std::size_t j) const { return q_[i * dim_ + j]; }
    /// Rotation angle in (-pi, pi]; 2D only.
    double angle() const;

    /// y = Q x
    void apply(std::span<const double> x, std::span<double> y) const;
    /// y = Q^T x
    void apply_transpose(std::span<const double> x, std::span<double> y) const;

private:
    RotationLayer(std::size_t dim, std::vector<double> q) : dim_(dim), q_(std::move(q)) {}

    std::size_t dim_ = 0;
    std::vector<double> q_;
};

/// Scale s(b) and shift t(b) as natural cubic splines through per-bin knots.
class SplineConditioner {
public:
    SplineConditioner() : SplineConditioner({0.0}, {1.0}, {0.0}) {}
    SplineConditioner(std::vector<double> centers, std::vector<double> scales, std::vector<double> shifts);

    double scale(double b) const { return scale_(b); }
    double shift(double b) const { return shift_(b); }
    double scale_derivative(double b) const { return scale_.derivative(b); }
    double shift_derivative(double b) const { return shift_.derivative(b); }

    const std::vector<double>& centers() const { return scale_.knots(); }
    const std::vector<double>& scale_knots() const { return scale_.values(); }
    const std::vector<double>& shift_knots() const { return shift_.values(); }

private:
    NaturalCubicSpline scale_;
    NaturalCubicSpline shift_;
};

/// Scale and shift actually applied to the active coordinate.
struct AffineParams {
    double scale = 1.0;
    double shift = 0.0;
};

/// Rotation followed by an affine coupling on two dimensions: with (b, a) = Q x,
/// the passive b is kept and the active a becomes scale(b) * a + shift(b), where
///
///   scale(b) = clamp(alpha * s(b) + (1 - alpha), 1/L, L),   shift(b) = alpha * t(b).
///
/// The damping mixes the coupling output with its (rotated) input, which keeps
/// the block exactly invertible with log|det| = log scale(b).
class CouplingBlock {
public:
    CouplingBlock(RotationLayer rotation, SplineConditioner conditioner, double damping = 1.0,
                  double lipschitz = 20.0);

    const RotationLayer& rotation() const { return rotation_; }
    const SplineConditioner& conditioner() const { return conditioner_; }
    double damping() const { return damping_; }
    double lipschitz() const { return lipschitz_; }

    AffineParams effective(double b) const;

    /// z = f(x); returns log|det f'(x)|.
    double forward(std::span<const double> x, std::span<double> z) const;
    /// x = f^{-1}(z); returns log|det (f^{-1})'(z)|.
    double inverse(std::span<const double> z, std::span<double> x) const;

    /// Applies the block to every row in place, adding log-determinants into `logdet`.
    void forward_batch(Points& points, std::span<double> logdet) const;

private:
    RotationLayer rotation_;
    SplineConditioner conditioner_;
    double damping_;
    double lipschitz_;
};

struct Transformed {
    std::vector<double> point;
    double logdet = 0.0;
};

/// Ordered stack of coupling blocks, applied first to last in the forward direction.
class Flow {
public:
    Flow() = default;
    explicit Flow(std::vector<CouplingBlock> blocks) : blocks_(std::move(blocks)) {}

    void push_back(CouplingBlock block) { blocks_.push_back(std::move(block)); }
    std::size_t size() const { return blocks_.size(); }
    bool empty() const { return blocks_.empty(); }
    const CouplingBlock& block(std::size_t i) const { return blocks_.at(i); }
    const std::vector<CouplingBlock>& blocks() const { return blocks_; }

    /// Throws Error naming the block index on a non-finite intermediate.
    Transformed forward(std::span<const double> x) const;
    Transformed inverse(std::span<const double> z) const;

    /// Pushes every row through the flow in place; returns per-row log-determinants.
    std::vector<double> forward_batch(Points& points) const;

private:
    std::vector<CouplingBlock> blocks_;
};

Transformed forward(const CouplingBlock& block, std::span<const double> x);
Transformed inverse(const CouplingBlock& block, std::span<const double> z);

/// log p_theta(x) = log p_latent(f(x)) + log|det f'(x)|.
double model_log_density(const Flow& flow, const AnalyticDensity& latent, std::span<const double> x);

/// log|det J| of the block at x from a central-difference Jacobian with step h.
double logdet_fd_check(const CouplingBlock& block, std::span<const double> x, double h);

}  // namespace flowlab
