#include "flowlab/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "flowlab/parallel.hpp"

namespace flowlab {

namespace {

void require_2d(std::size_t size, const char* what) {
    if (size != 2) throw Error(fmt::format("{}: coupling blocks act on two-dimensional points", what));
}

}  // namespace

RotationLayer RotationLayer::identity(std::size_t dim) {
    std::vector<double> q(dim * dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k) q[k * dim + k] = 1.0;
    return {dim, std::move(q)};
}

RotationLayer RotationLayer::from_angle(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {2, {c, -s, s, c}};
}

RotationLayer RotationLayer::haar(std::size_t dim, Rng& rng) {
    if (dim == 0) throw Error("rotation: dimension must be positive");
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign correction makes the distribution Haar on O(D).
    for (Eigen::Index j = 0; j < n; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    if (q.determinant() < 0) q.col(0) *= -1.0;
    std::vector<double> flat(dim * dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) flat[static_cast<std::size_t>(i * n + j)] = q(i, j);
    return {dim, std::move(flat)};
}

RotationLayer RotationLayer::from_matrix(std::size_t dim, std::vector<double> row_major) {
    if (dim == 0 || row_major.size() != dim * dim) throw Error("rotation: matrix shape mismatch");
    const auto n = static_cast<Eigen::Index>(dim);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> q(
        row_major.data(), n, n);
    const double orth_err = (q.transpose() * q - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (orth_err > 1e-10) throw Error(fmt::format("rotation: matrix not orthogonal (error {:.3e})", orth_err));
    if (std::abs(q.determinant() - 1.0) > 1e-10) throw Error("rotation: determinant must be +1");
    return {dim, std::move(row_major)};
}

double RotationLayer::angle() const {
    if (dim_ != 2) throw Error("rotation: angle is defined for 2D rotations only");
    return std::atan2(q_[2], q_[0]);
}

void RotationLayer::apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += q_[i * dim_ + j] * x[j];
        y[i] = acc;
    }
}

void RotationLayer::apply_transpose(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += q_[j * dim_ + i] * x[j];
        y[i] = acc;
    }
}

SplineConditioner::SplineConditioner(std::vector<double> centers, std::vector<double> scales,
                                     std::vector<double> shifts)
    : scale_(centers, std::move(scales)), shift_(std::move(centers), std::move(shifts)) {}

CouplingBlock::CouplingBlock(RotationLayer rotation, SplineConditioner conditioner, double damping,
                             double lipschitz)
    : rotation_(std::move(rotation)),
      conditioner_(std::move(conditioner)),
      damping_(damping),
      lipschitz_(lipschitz) {
    require_2d(rotation_.dim(), "coupling block");
    if (!(damping_ > 0.0 && damping_ <= 1.0)) throw Error("coupling block: damping must lie in (0, 1]");
    if (!(lipschitz_ > 1.0)) throw Error("coupling block: Lipschitz bound must exceed 1");
}

AffineParams CouplingBlock::effective(double b) const {
    const double raw = damping_ * conditioner_.scale(b) + (1.0 - damping_);
    return {std::clamp(raw, 1.0 / lipschitz_, lipschitz_), damping_ * conditioner_.shift(b)};
}

double CouplingBlock::forward(std::span<const double> x, std::span<double> z) const {
    require_2d(x.size(), "forward");
    std::array<double, 2> y{};
    rotation_.apply(x, y);
    const auto p = effective(y[0]);
    z[0] = y[0];
    z[1] = p.scale * y[1] + p.shift;
    return std::log(p.scale);
}

double CouplingBlock::inverse(std::span<const double> z, std::span<double> x) const {
    require_2d(z.size(), "inverse");
    const auto p = effective(z[0]);
    const std::array<double, 2> y = {z[0], (z[1] - p.shift) / p.scale};
    rotation_.apply_transpose(y, x);
    return -std::log(p.scale);
}

void CouplingBlock::forward_batch(Points& points, std::span<double> logdet) const {
    require_2d(points.dim(), "forward_batch");
    const double q00 = rotation_(0, 0), q01 = rotation_(0, 1), q10 = rotation_(1, 0), q11 = rotation_(1, 1);
    double* data = points.data().data();
    parallel_chunks(points.count(), 1 << 14, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double x0 = data[2 * i], x1 = data[2 * i + 1];
            const double b = q00 * x0 + q01 * x1;
            const double a = q10 * x0 + q11 * x1;
            const auto p = effective(b);
            data[2 * i] = b;
            data[2 * i + 1] = p.scale * a + p.shift;
            logdet[i] += std::log(p.scale);
        }
    });
}

Transformed Flow::forward(std::span<const double> x) const {
    Transformed out{{x.begin(), x.end()}, 0.0};
    std::vector<double> next(x.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        out.logdet += blocks_[k].forward(out.point, next);
        if (!std::isfinite(next[0]) || !std::isfinite(next[1]) || !std::isfinite(out.logdet))
            throw Error(fmt::format("flow forward: non-finite value after block {}", k));
        out.point.swap(next);
    }
    return out;
}

Transformed Flow::inverse(std::span<const double> z) const {
    Transformed out{{z.begin(), z.end()}, 0.0};
    std::vector<double> next(z.size());
    for (std::size_t k = blocks_.size(); k-- > 0;) {
        out.logdet += blocks_[k].inverse(out.point, next);
        if (!std::isfinite(next[0]) || !std::isfinite(next[1]) || !std::isfinite(out.logdet))
            throw Error(fmt::format("flow inverse: non-finite value after block {}", k));
        out.point.swap(next);
    }
    return out;
}

std::vector<double> Flow::forward_batch(Points& points) const {
    std::vector<double> logdet(points.count(), 0.0);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        blocks_[k].forward_batch(points, logdet);
        for (std::size_t i = 0; i < points.count(); ++i) {
            if (!std::isfinite(points(i, 0)) || !std::isfinite(points(i, 1)))
                throw Error(fmt::format("flow forward: non-finite value after block {} (row {})", k, i));
        }
    }
    return logdet;
}

Transformed forward(const CouplingBlock& block, std::span<const double> x) {
    Transformed out{std::vector<double>(x.size()), 0.0};
    out.logdet = block.forward(x, out.point);
    return out;
}

Transformed inverse(const CouplingBlock& block, std::span<const double> z) {
    Transformed out{std::vector<double>(z.size()), 0.0};
    out.logdet = block.inverse(z, out.point);
    return out;
}

double model_log_density(const Flow& flow, const AnalyticDensity& latent, std::span<const double> x) {
    const auto t = flow.forward(x);
    return latent.log_density(t.point) + t.logdet;
}

double logdet_fd_check(const CouplingBlock& block, std::span<const double> x, double h) {
    if (!(h >= 1e-6 && h <= 1e-3)) throw Error("logdet_fd_check: step must lie in [1e-6, 1e-3]");
    require_2d(x.size(), "logdet_fd_check");
    double jac[2][2];
    for (std::size_t j = 0; j < 2; ++j) {
        std::array<double, 2> lo = {x[0], x[1]}, hi = lo, zlo{}, zhi{};
        lo[j] -= h;
        hi[j] += h;
        block.forward(lo, zlo);
        block.forward(hi, zhi);
        for (std::size_t i = 0; i < 2; ++i) jac[i][j] = (zhi[i] - zlo[i]) / (2.0 * h);
    }
    const double det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if (!(std::abs(det) > 1e-300) || !std::isfinite(det))
        throw Error("logdet_fd_check: numerical Jacobian is singular");
    return std::log(std::abs(det));
}

}  // namespace flowlab
