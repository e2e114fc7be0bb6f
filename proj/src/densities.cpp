#include "flowlab/densities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "flowlab/parallel.hpp"
#include "flowlab/quadrature.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr std::size_t kSampleChunk = 4096;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double log_sum_exp(std::span<const double> terms) {
    double hi = kNegInf;
    for (double t : terms) hi = std::max(hi, t);
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - hi);
    return hi + std::log(sum);
}

}  // namespace

std::string to_string(DensityKind kind) {
    switch (kind) {
        case DensityKind::gaussian: return "gaussian";
        case DensityKind::gmm: return "gmm";
        case DensityKind::ring_mixture: return "ring";
        case DensityKind::box_counterexample: return "box";
    }
    return "unknown";
}

AnalyticDensity AnalyticDensity::gaussian(std::vector<double> mean, std::vector<double> covariance) {
    AnalyticDensity d;
    d.kind_ = DensityKind::gaussian;
    d.dim_ = mean.size();
    d.components_.push_back({1.0, std::move(mean), std::move(covariance)});
    d.prepare();
    return d;
}

AnalyticDensity AnalyticDensity::standard_normal(std::size_t dim) {
    std::vector<double> cov(dim * dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k) cov[k * dim + k] = 1.0;
    return gaussian(std::vector<double>(dim, 0.0), std::move(cov));
}

AnalyticDensity AnalyticDensity::gmm(std::vector<GaussianComponent> components) {
    if (components.empty()) throw Error("gmm: at least one component required");
    AnalyticDensity d;
    d.kind_ = DensityKind::gmm;
    d.dim_ = components.front().mean.size();
    d.components_ = std::move(components);
    d.prepare();
    return d;
}

AnalyticDensity AnalyticDensity::ring_mixture(std::size_t count, double sigma, double radius) {
    if (count == 0) throw Error("ring: component count must be positive");
    if (!(sigma > 0.0) || !(radius > 0.0)) throw Error("ring: sigma and radius must be positive");
    std::vector<GaussianComponent> comps;
    comps.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
        comps.push_back({1.0 / static_cast<double>(count),
                         {radius * std::cos(phi), radius * std::sin(phi)},
                         {sigma * sigma, 0.0, 0.0, sigma * sigma}});
    }
    AnalyticDensity d = gmm(std::move(comps));
    d.kind_ = DensityKind::ring_mixture;
    d.ring_ = {count, sigma, radius};
    return d;
}

AnalyticDensity AnalyticDensity::box_counterexample(double plateau, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < plateau)) throw Error("box: epsilon must lie in (0, plateau)");
    AnalyticDensity d;
    d.kind_ = DensityKind::box_counterexample;
    d.dim_ = 2;
    d.box_ = {plateau, counterexample_normalizer(plateau), epsilon};
    return d;
}

AnalyticDensity AnalyticDensity::bimodal_gmm() {
    return gmm({{0.5, {-0.5, -0.5}, {0.2, 0.0, 0.0, 0.2}}, {0.5, {0.5, 0.5}, {0.1, 0.0, 0.0, 0.1}}});
}

void AnalyticDensity::prepare() {
    if (dim_ == 0) throw Error("density: dimension must be positive");
    double total_weight = 0.0;
    for (const auto& c : components_) {
        if (c.mean.size() != dim_ || c.covariance.size() != dim_ * dim_)
            throw Error("density: component shapes disagree with dimension");
        if (!(c.weight > 0.0)) throw Error("density: component weights must be positive");
        total_weight += c.weight;
    }
    if (std::abs(total_weight - 1.0) > 1e-9)
        throw Error(fmt::format("density: weights sum to {} instead of 1", total_weight));

    prepared_.clear();
    for (const auto& c : components_) {
        const Eigen::Map<const RowMatrix> cov(c.covariance.data(), static_cast<Eigen::Index>(dim_),
                                              static_cast<Eigen::Index>(dim_));
        if (!cov.isApprox(cov.transpose(), 1e-12)) throw Error("density: covariance not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) throw Error("density: covariance not positive definite");
        const Eigen::MatrixXd lower = llt.matrixL();
        const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
        Prepared p;
        p.cholesky.resize(dim_ * dim_);
        p.precision.resize(dim_ * dim_);
        double log_det = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            log_det += 2.0 * std::log(lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
            for (std::size_t j = 0; j < dim_; ++j) {
                const auto ei = static_cast<Eigen::Index>(i), ej = static_cast<Eigen::Index>(j);
                p.cholesky[i * dim_ + j] = lower(ei, ej);
                p.precision[i * dim_ + j] = precision(ei, ej);
            }
        }
        p.log_norm = std::log(c.weight) - 0.5 * static_cast<double>(dim_) * kLog2Pi - 0.5 * log_det;
        prepared_.push_back(std::move(p));
    }
}

double AnalyticDensity::box_value(double x, double y) const {
    const double ax = std::abs(x), ay = std::abs(y);
    if (ax <= 0.5 && ay <= 0.5) return box_.plateau;
    const double edge = 0.5 + box_.ramp_width();
    // Ramp branches meet only on the diagonals; there both give the same value
    // and the minimum is taken.
    double value = std::numeric_limits<double>::infinity();
    bool hit = false;
    if (ax >= 0.5 && ax <= edge && ay <= ax) {
        value = std::min(value, box_.plateau - box_.slope * (ax - 0.5));
        hit = true;
    }
    if (ay >= 0.5 && ay <= edge && ax <= ay) {
        value = std::min(value, box_.plateau - box_.slope * (ay - 0.5));
        hit = true;
    }
    return hit ? std::max(value, 0.0) : 0.0;
}

double AnalyticDensity::log_density(std::span<const double> x) const {
    if (x.size() != dim_) throw Error("log_density: point dimension mismatch");
    if (kind_ == DensityKind::box_counterexample) {
        const double v = box_value(x[0], x[1]);
        return v > 0.0 ? std::log(v) : kNegInf;
    }
    constexpr std::size_t kStackTerms = 64;
    double stack_terms[kStackTerms];
    std::vector<double> heap_terms;
    double* terms = stack_terms;
    if (components_.size() > kStackTerms) {
        heap_terms.resize(components_.size());
        terms = heap_terms.data();
    }
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const auto& mean = components_[c].mean;
        const auto& prec = prepared_[c].precision;
        double quad = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            const double di = x[i] - mean[i];
            double row = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) row += prec[i * dim_ + j] * (x[j] - mean[j]);
            quad += di * row;
        }
        terms[c] = prepared_[c].log_norm - 0.5 * quad;
    }
    return log_sum_exp({terms, components_.size()});
}

double AnalyticDensity::density(std::span<const double> x) const { return std::exp(log_density(x)); }

Points AnalyticDensity::sample(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw Error("sample: n must be at least 1");
    Points out(n, dim_);
    parallel_chunks(n, kSampleChunk, [&](std::size_t begin, std::size_t end) {
        Rng rng = make_rng(seed, begin / kSampleChunk);
        if (kind_ == DensityKind::box_counterexample) {
            const double edge = 0.5 + box_.ramp_width();
            std::uniform_real_distribution<double> coord(-edge, edge);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t i = begin; i < end; ++i) {
                bool accepted = false;
                for (int attempt = 0; attempt < 10000 && !accepted; ++attempt) {
                    const double x = coord(rng), y = coord(rng);
                    const double v = box_value(x, y);
                    if (v > box_.plateau * (1.0 + 1e-12))
                        throw Error("sample: rejection envelope below box density (internal defect)");
                    if (unit(rng) * box_.plateau < v) {
                        out(i, 0) = x;
                        out(i, 1) = y;
                        accepted = true;
                    }
                }
                if (!accepted) throw Error("sample: box rejection sampler failed to accept (internal defect)");
            }
            return;
        }
        std::vector<double> weights;
        weights.reserve(components_.size());
        for (const auto& c : components_) weights.push_back(c.weight);
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t c = components_.size() == 1 ? 0 : pick(rng);
            auto row = out.row(i);
            for (std::size_t k = 0; k < dim_; ++k) row[k] = normal(rng);
            const auto& chol = prepared_[c].cholesky;
            const auto& mean = components_[c].mean;
            // row <- mean + L row, bottom-up so unread entries are still the raw normals.
            for (std::size_t k = dim_; k-- > 0;) {
                double acc = 0.0;
                for (std::size_t j = 0; j <= k; ++j) acc += chol[k * dim_ + j] * row[j];
                row[k] = mean[k] + acc;
            }
        }
    });
    return out;
}

std::vector<double> AnalyticDensity::mean() const {
    std::vector<double> m(dim_, 0.0);
    if (kind_ == DensityKind::box_counterexample) return m;
    for (const auto& c : components_)
        for (std::size_t k = 0; k < dim_; ++k) m[k] += c.weight * c.mean[k];
    return m;
}

std::vector<double> AnalyticDensity::covariance() const {
    std::vector<double> cov(dim_ * dim_, 0.0);
    if (kind_ == DensityKind::box_counterexample) {
        const auto f = [this](double x, double y) { return x * x * box_value(x, y); };
        const double var = integrate_2d(f, support_box(), 1e-9).value;
        cov[0] = cov[3] = var;
        return cov;
    }
    const auto m = mean();
    for (const auto& c : components_)
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j)
                cov[i * dim_ + j] += c.weight * (c.covariance[i * dim_ + j] +
                                                 (c.mean[i] - m[i]) * (c.mean[j] - m[j]));
    return cov;
}

Box AnalyticDensity::support_box() const {
    Box box{std::vector<double>(dim_), std::vector<double>(dim_)};
    if (kind_ == DensityKind::box_counterexample) {
        const double edge = 0.5 + box_.ramp_width();
        box.lower = {-edge, -edge};
        box.upper = {edge, edge};
        return box;
    }
    constexpr double kSigmas = 9.0;
    for (std::size_t k = 0; k < dim_; ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& c : components_) {
            const double sd = std::sqrt(c.covariance[k * dim_ + k]);
            lo = std::min(lo, c.mean[k] - kSigmas * sd);
            hi = std::max(hi, c.mean[k] + kSigmas * sd);
        }
        box.lower[k] = lo;
        box.upper[k] = hi;
    }
    return box;
}

double counterexample_mass(double plateau, double slope) {
    // Plateau square contributes `plateau`; each of the four ramp wedges
    // integrates (plateau - slope u)(2u + 1) over u in [0, w], w = plateau / slope.
    const double w = plateau / slope;
    return plateau + 4.0 * (plateau * w * w / 3.0 + plateau * w / 2.0);
}

double counterexample_normalizer(double plateau) {
    if (!(plateau > 0.0)) throw Error("counterexample_normalizer: plateau must be positive");
    if (plateau >= 1.0)
        throw Error(fmt::format(
            "counterexample_normalizer: plateau {} already carries all the mass; no finite slope exists",
            plateau));
    const auto excess = [plateau](double log_slope) {
        return counterexample_mass(plateau, std::exp(log_slope)) - 1.0;
    };
    double lo = -20.0, hi = 60.0;
    if (excess(lo) <= 0.0 || excess(hi) >= 0.0)
        throw Error("counterexample_normalizer: could not bracket the slope");
    std::uintmax_t iters = 200;
    const auto root = boost::math::tools::toms748_solve(
        excess, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    return std::exp(0.5 * (root.first + root.second));
}

std::size_t GridDensity::cell_count() const {
    std::size_t n = 1;
    for (auto e : extents) n *= e;
    return n;
}

double GridDensity::cell_volume() const {
    double v = 1.0;
    for (double a : spacing) v *= a;
    return v;
}

double GridDensity::total_mass() const {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
}

std::vector<std::size_t> GridDensity::unflatten(std::size_t index) const {
    std::vector<std::size_t> multi(dim());
    for (std::size_t k = dim(); k-- > 0;) {
        multi[k] = index % extents[k];
        index /= extents[k];
    }
    return multi;
}

std::size_t GridDensity::flatten(std::span<const std::size_t> multi) const {
    std::size_t index = 0;
    for (std::size_t k = 0; k < dim(); ++k) index = index * extents[k] + multi[k];
    return index;
}

std::vector<double> GridDensity::cell_center(std::size_t index) const {
    const auto multi = unflatten(index);
    std::vector<double> c(dim());
    for (std::size_t k = 0; k < dim(); ++k)
        c[k] = origin[k] + (static_cast<double>(multi[k]) + 0.5) * spacing[k];
    return c;
}

double GridDensity::interpolate_density(double x, double y) const {
    if (dim() != 2) throw Error("interpolate_density: grid must be two-dimensional");
    const double vol = cell_volume();
    // Continuous cell coordinates relative to cell centers.
    const double u = (x - origin[0]) / spacing[0] - 0.5;
    const double v = (y - origin[1]) / spacing[1] - 0.5;
    const double nx = static_cast<double>(extents[0]), ny = static_cast<double>(extents[1]);
    if (u < -0.5 || v < -0.5 || u > nx - 0.5 || v > ny - 0.5) return 0.0;
    const auto at = [&](long i, long j) {
        i = std::clamp<long>(i, 0, static_cast<long>(extents[0]) - 1);
        j = std::clamp<long>(j, 0, static_cast<long>(extents[1]) - 1);
        return masses[static_cast<std::size_t>(i) * extents[1] + static_cast<std::size_t>(j)] / vol;
    };
    const double fu = std::floor(u), fv = std::floor(v);
    const long i0 = static_cast<long>(fu), j0 = static_cast<long>(fv);
    const double tu = u - fu, tv = v - fv;
    return (1 - tu) * (1 - tv) * at(i0, j0) + tu * (1 - tv) * at(i0 + 1, j0) +
           (1 - tu) * tv * at(i0, j0 + 1) + tu * tv * at(i0 + 1, j0 + 1);
}

void GridDensity::normalize() {
    const double total = total_mass();
    if (!(total > 0.0) || !std::isfinite(total)) throw Error("grid: cannot normalize zero or non-finite mass");
    for (double& m : masses) m /= total;
}

double GridDensity::mass_in(const Box& region) const {
    double s = 0.0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        const auto c = cell_center(i);
        bool inside = true;
        for (std::size_t k = 0; k < dim() && inside; ++k)
            inside = c[k] >= region.lower[k] && c[k] <= region.upper[k];
        if (inside) s += masses[i];
    }
    return s;
}

Box GridDensity::bounds() const {
    Box b{origin, origin};
    for (std::size_t k = 0; k < dim(); ++k) b.upper[k] += spacing[k] * static_cast<double>(extents[k]);
    return b;
}

double quadrature_mass(const AnalyticDensity& density, const Box& box, double tol) {
    if (density.dim() != 2 || box.dim() != 2) throw Error("quadrature_mass: two-dimensional densities only");
    const auto f = [&density](double x, double y) {
        const double p[2] = {x, y};
        return density.density(p);
    };
    return integrate_2d(f, box, tol).value;
}

GridDensity discretize(const AnalyticDensity& density, std::vector<double> origin,
                       std::vector<double> spacing, std::vector<std::size_t> extents, double min_coverage) {
    const std::size_t d = density.dim();
    if (origin.size() != d || spacing.size() != d || extents.size() != d)
        throw Error("discretize: grid geometry does not match density dimension");
    for (std::size_t k = 0; k < d; ++k) {
        if (!(spacing[k] > 0.0)) throw Error("discretize: spacing must be positive");
        if (extents[k] == 0) throw Error("discretize: extents must be positive");
    }
    GridDensity grid{std::move(origin), std::move(spacing), std::move(extents), {}};
    const std::size_t n = grid.cell_count();
    grid.masses.assign(n, 0.0);
    const double vol = grid.cell_volume();
    parallel_chunks(n, 16384, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) grid.masses[i] = density.density(grid.cell_center(i)) * vol;
    });

    double covered = grid.total_mass();
    if (d == 2) covered = quadrature_mass(density, grid.bounds(), 1e-7);
    if (covered < min_coverage)
        throw Error(fmt::format("discretize: grid covers only {:.6f} of the probability mass ({:.3e} missing)",
                                covered, 1.0 - covered));
    grid.normalize();
    return grid;
}

}  // namespace flowlab
