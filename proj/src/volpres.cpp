#include "flowlab/volpres.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "flowlab/parallel.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

namespace {

constexpr std::size_t kSampleChunk = 4096;

double unit_ball_volume(std::size_t dim) {
    const double d = static_cast<double>(dim);
    return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

// Cell indices by decreasing mass; equal masses keep index order.
std::vector<std::size_t> descending_order(std::span<const double> masses) {
    std::vector<std::size_t> order(masses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return masses[l] > masses[r]; });
    return order;
}

// P(lo <= X <= hi) for X ~ N(0, sd^2), accurate in both tails.
double normal_interval(double lo, double hi, double sd) {
    const double s = sd * std::numbers::sqrt2;
    if (lo >= 0.0) return 0.5 * (std::erfc(lo / s) - std::erfc(hi / s));
    if (hi <= 0.0) return 0.5 * (std::erfc(-hi / s) - std::erfc(-lo / s));
    return 1.0 - 0.5 * std::erfc(-lo / s) - 0.5 * std::erfc(hi / s);
}

void require_same_geometry(const GridDensity& a, const GridDensity& b, const char* what) {
    if (a.cell_count() != b.cell_count() || a.masses.size() != b.masses.size())
        throw Error(fmt::format("{}: grids have different cell counts ({} vs {})", what, a.cell_count(),
                                b.cell_count()));
    const double va = a.cell_volume(), vb = b.cell_volume();
    if (std::abs(va - vb) > 1e-12 * std::max(va, vb))
        throw Error(fmt::format("{}: grids have different cell volumes ({} vs {})", what, va, vb));
}

}  // namespace

SortedGridMap sorted_grid_map(const GridDensity& source, const GridDensity& latent) {
    require_same_geometry(source, latent, "sorted_grid_map");
    const auto src = descending_order(source.masses);
    const auto lat = descending_order(latent.masses);
    SortedGridMap map;
    map.permutation.resize(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) map.permutation[src[k]] = lat[k];
    return map;
}

double permutation_kl(std::span<const double> source, std::span<const double> latent,
                      std::span<const std::size_t> permutation) {
    if (source.size() != latent.size() || permutation.size() != source.size())
        throw Error("permutation_kl: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const double p = source[i];
        if (p <= 0.0) continue;
        const double q = latent[permutation[i]];
        if (q <= 0.0) return std::numeric_limits<double>::infinity();
        kl += p * std::log(p / q);
    }
    return kl;
}

double discrete_kl(const GridDensity& source, const GridDensity& latent, const SortedGridMap& map) {
    require_same_geometry(source, latent, "discrete_kl");
    return permutation_kl(source.masses, latent.masses, map.permutation);
}

GridDensity gaussian_cell_masses(const GridDensity& geometry, double variance) {
    if (!(variance > 0.0)) throw Error("gaussian_cell_masses: variance must be positive");
    const std::size_t dim = geometry.dim();
    const double sd = std::sqrt(variance);
    std::vector<std::vector<double>> axis(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        axis[k].resize(geometry.extents[k]);
        for (std::size_t i = 0; i < geometry.extents[k]; ++i) {
            const double lo = geometry.origin[k] + static_cast<double>(i) * geometry.spacing[k];
            axis[k][i] = normal_interval(lo, lo + geometry.spacing[k], sd);
        }
    }
    GridDensity out{geometry.origin, geometry.spacing, geometry.extents, {}};
    out.masses.resize(geometry.cell_count());
    for (std::size_t c = 0; c < out.masses.size(); ++c) {
        const auto idx = geometry.unflatten(c);
        double m = 1.0;
        for (std::size_t k = 0; k < dim; ++k) m *= axis[k][idx[k]];
        out.masses[c] = m;
    }
    return out;
}

Points transport_samples(const SortedGridMap& map, const GridDensity& source, const GridDensity& latent,
                         const Points& samples) {
    require_same_geometry(source, latent, "transport_samples");
    const std::size_t dim = source.dim();
    if (samples.dim() != dim) throw Error("transport_samples: sample dimension does not match the grid");
    std::vector<double> kept;
    kept.reserve(samples.data().size());
    std::vector<std::size_t> idx(dim);
    for (std::size_t i = 0; i < samples.count(); ++i) {
        bool inside = true;
        for (std::size_t k = 0; k < dim && inside; ++k) {
            const double u = (samples(i, k) - source.origin[k]) / source.spacing[k];
            if (!(u >= 0.0) || u >= static_cast<double>(source.extents[k])) {
                inside = false;
            } else {
                idx[k] = std::min(static_cast<std::size_t>(u), source.extents[k] - 1);
            }
        }
        if (!inside) continue;
        const auto target = latent.unflatten(map.permutation[source.flatten(idx)]);
        for (std::size_t k = 0; k < dim; ++k) {
            const double offset = samples(i, k) - (source.origin[k] + static_cast<double>(idx[k]) * source.spacing[k]);
            kept.push_back(latent.origin[k] + static_cast<double>(target[k]) * latent.spacing[k] + offset);
        }
    }
    Points out(kept.size() / dim, dim);
    out.data() = std::move(kept);
    return out;
}

RadialProfile::RadialProfile(std::size_t dim, double cell_volume, std::vector<double> levels)
    : dim_(dim), cell_volume_(cell_volume), levels_(std::move(levels)), unit_ball_(unit_ball_volume(dim)) {
    if (dim_ == 0) throw Error("radial profile: dimension must be positive");
    if (!(cell_volume_ > 0.0)) throw Error("radial profile: cell volume must be positive");
    if (levels_.empty()) throw Error("radial profile: no levels");
    for (double v : levels_)
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("radial profile: levels must be finite and non-negative");
    std::sort(levels_.begin(), levels_.end(), std::greater<>());
    while (levels_.size() > 1 && levels_.back() == 0.0) levels_.pop_back();
    cumulative_mass_.resize(levels_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        acc += levels_[k] * cell_volume_;
        cumulative_mass_[k] = acc;
    }
}

double RadialProfile::volume_of_radius(double radius) const {
    return unit_ball_ * std::pow(std::max(radius, 0.0), static_cast<double>(dim_));
}

double RadialProfile::radius_of_volume(double volume) const {
    return std::pow(std::max(volume, 0.0) / unit_ball_, 1.0 / static_cast<double>(dim_));
}

double RadialProfile::density_at(double radius) const {
    const double shells = volume_of_radius(radius) / cell_volume_;
    const std::size_t n = levels_.size();
    if (shells >= static_cast<double>(n)) return 0.0;
    const double t = shells - 0.5;
    if (t <= 0.0) return levels_.front();
    const auto k = static_cast<std::size_t>(t);
    if (k + 1 >= n) return levels_.back();
    const double w = t - static_cast<double>(k);
    return (1.0 - w) * levels_[k] + w * levels_[k + 1];
}

double RadialProfile::superlevel_volume(double level) const {
    const auto it = std::partition_point(levels_.begin(), levels_.end(), [&](double v) { return v >= level; });
    return static_cast<double>(it - levels_.begin()) * cell_volume_;
}

double RadialProfile::mass() const { return cumulative_mass_.back(); }

double RadialProfile::second_moment() const {
    // Shell k spans enclosed volumes [k v, (k+1) v) and |x|^2 = (u / omega)^(2/D).
    const double p = 1.0 + 2.0 / static_cast<double>(dim_);
    const double norm = std::pow(unit_ball_, -2.0 / static_cast<double>(dim_)) / p;
    double acc = 0.0;
    double lower = 0.0;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        const double upper = std::pow(static_cast<double>(k + 1) * cell_volume_, p);
        acc += levels_[k] * (upper - lower);
        lower = upper;
    }
    return norm * acc;
}

double RadialProfile::variance() const {
    return second_moment() / (static_cast<double>(dim_) * mass());
}

double RadialProfile::entropy() const {
    double h = 0.0;
    for (double v : levels_)
        if (v > 0.0) h -= v * cell_volume_ * std::log(v);
    return h;
}

double RadialProfile::kl_to_isotropic_gaussian(double variance) const {
    if (!(variance > 0.0)) throw Error("kl_to_isotropic_gaussian: variance must be positive");
    const double d = static_cast<double>(dim_);
    const double cross = 0.5 * d * std::log(2.0 * std::numbers::pi * variance) * mass() +
                         second_moment() / (2.0 * variance);
    return cross - entropy();
}

std::vector<LevelRow> RadialProfile::level_table(std::size_t count, double floor) const {
    if (count < 2) throw Error("level_table: need at least two levels");
    if (!(floor > 0.0 && floor < 1.0)) throw Error("level_table: floor must lie in (0, 1)");
    std::vector<LevelRow> rows(count);
    const double top = max_density();
    for (std::size_t i = 0; i < count; ++i) {
        const double level = top * std::pow(floor, static_cast<double>(i) / static_cast<double>(count - 1));
        const double volume = superlevel_volume(level);
        rows[i] = {level, volume, radius_of_volume(volume)};
        if (i > 0 && volume < rows[i - 1].superlevel_volume)
            throw Error(fmt::format("level_table: superlevel volume decreases at level {}", level));
    }
    return rows;
}

Points RadialProfile::sample(std::size_t n, std::uint64_t seed) const {
    Points out(n, dim_);
    const double total = mass();
    parallel_chunks(n, kSampleChunk, [&](std::size_t begin, std::size_t end) {
        Rng rng = make_rng(seed, begin / kSampleChunk);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> dir(dim_);
        for (std::size_t i = begin; i < end; ++i) {
            const double u = unit(rng) * total;
            auto k = static_cast<std::size_t>(std::upper_bound(cumulative_mass_.begin(), cumulative_mass_.end(), u) -
                                              cumulative_mass_.begin());
            k = std::min(k, levels_.size() - 1);
            const double r = radius_of_volume((static_cast<double>(k) + unit(rng)) * cell_volume_);
            double norm = 0.0;
            do {
                norm = 0.0;
                for (auto& c : dir) {
                    c = normal(rng);
                    norm += c * c;
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < dim_; ++j) out(i, j) = r * dir[j] / norm;
        }
    });
    return out;
}

RadialProfile radial_rearrangement(const GridDensity& source) {
    if (source.cell_count() == 0) throw Error("radial_rearrangement: empty grid");
    const double volume = source.cell_volume();
    std::vector<double> levels(source.masses.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(source.masses[i] >= 0.0)) throw Error(fmt::format("radial_rearrangement: negative mass at cell {}", i));
        levels[i] = source.masses[i] / volume;
    }
    return {source.dim(), volume, std::move(levels)};
}

RadialProfile radial_rearrangement(const AnalyticDensity& source, std::size_t resolution) {
    if (source.dim() != 2) throw Error("radial_rearrangement: analytic sources must be two-dimensional");
    if (resolution < 2) throw Error("radial_rearrangement: resolution must be at least 2");
    const Box box = source.support_box();
    const double width = std::max(box.upper[0] - box.lower[0], box.upper[1] - box.lower[1]);
    const double h = width / static_cast<double>(resolution);
    std::vector<std::size_t> extents(2);
    for (std::size_t k = 0; k < 2; ++k)
        extents[k] = static_cast<std::size_t>(std::ceil((box.upper[k] - box.lower[k]) / h - 1e-9));
    return radial_rearrangement(discretize(source, box.lower, {h, h}, extents));
}

double optimal_scale(const RadialProfile& profile, std::size_t dim) {
    if (dim != profile.dim()) throw Error("optimal_scale: dimension mismatch");
    const double d = static_cast<double>(dim);
    const double det = std::pow(profile.variance(), d);
    return std::pow(det, -1.0 / (2.0 * d));
}

BoundReport lower_bound_kl(const RadialProfile& profile, std::size_t dim) {
    if (dim != profile.dim()) throw Error("lower_bound_kl: dimension mismatch");
    BoundReport r;
    r.mass = profile.mass();
    r.variance = profile.variance();
    r.covariance_det = std::pow(r.variance, static_cast<double>(dim));
    r.optimal_scale = optimal_scale(profile, dim);
    r.entropy = profile.entropy();
    r.lower_bound = profile.kl_to_isotropic_gaussian(r.variance);
    if (!std::isfinite(r.lower_bound)) throw Error("lower_bound_kl: non-finite bound");
    return r;
}

VolumePreservingSolution solve_volume_preserving(const GridDensity& source) {
    auto profile = radial_rearrangement(source);
    auto report = lower_bound_kl(profile, source.dim());
    const double c = report.optimal_scale;
    auto latent = gaussian_cell_masses(source, 1.0 / (c * c));
    auto map = sorted_grid_map(source, latent);
    map.scale = c;
    report.achieved_kl = discrete_kl(source, latent, map);
    return {std::move(profile), std::move(latent), std::move(map), std::move(report)};
}

CounterexampleBounds counterexample_bounds(double epsilon, std::span<const double> jacobians, double plateau) {
    if (!(plateau > 0.0 && plateau < 1.0)) throw Error("counterexample_bounds: plateau must lie in (0, 1)");
    if (!(epsilon > 0.0 && epsilon < plateau))
        throw Error(fmt::format("counterexample_bounds: epsilon must lie in (0, {})", plateau));
    CounterexampleBounds b;
    b.epsilon = epsilon;
    b.plateau = plateau;
    const double level = plateau - epsilon;
    b.case1_bound = 2.0 * epsilon * epsilon;
    b.max_volume_a = std::min(1.0, 1.0 / (std::numbers::e * level));
    b.argmax_jacobian = 2.0 * std::numbers::pi * std::numbers::e * level;
    const double tv2 = epsilon * (1.0 - b.max_volume_a);
    b.case2_bound = 2.0 * tv2 * tv2;
    b.overall_bound = std::min(b.case1_bound, b.case2_bound);
    b.sweep_minimum = std::numeric_limits<double>::infinity();
    b.sweep.reserve(jacobians.size());
    for (double j : jacobians) {
        if (!(j > 0.0)) throw Error("counterexample_bounds: Jacobians must be positive");
        CounterexampleRow row;
        row.jacobian = j;
        const double volume = (2.0 * std::numbers::pi / j) * std::log(j / (2.0 * std::numbers::pi * level));
        if (volume > 0.0) {
            row.case_id = 2;
            row.volume_a = std::min(volume, 1.0);
            row.tv_bound = epsilon * (1.0 - row.volume_a);
        } else {
            row.case_id = 1;
            row.tv_bound = epsilon;
        }
        row.kl_bound = 2.0 * row.tv_bound * row.tv_bound;
        b.sweep_minimum = std::min(b.sweep_minimum, row.kl_bound);
        b.sweep.push_back(row);
    }
    if (b.sweep.empty()) b.sweep_minimum = b.overall_bound;
    return b;
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi > lo)) throw Error("log_grid: need 0 < lo < hi");
    if (count < 2) throw Error("log_grid: need at least two points");
    std::vector<double> out(count);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::size_t count_modes(const GridDensity& grid) {
    if (grid.dim() != 2) throw Error("count_modes: two-dimensional grids only");
    const std::size_t nx = grid.extents[0], ny = grid.extents[1];
    const auto& m = grid.masses;
    auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    std::vector<char> seen(m.size(), 0);
    std::deque<std::size_t> queue;
    std::size_t modes = 0;
    for (std::size_t start = 0; start < m.size(); ++start) {
        if (seen[start]) continue;
        const double value = m[start];
        bool is_mode = value > 0.0;
        seen[start] = 1;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t c = queue.front();
            queue.pop_front();
            const std::size_t i = c / ny, j = c % ny;
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const auto ii = static_cast<std::ptrdiff_t>(i) + di, jj = static_cast<std::ptrdiff_t>(j) + dj;
                    if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(nx) ||
                        jj >= static_cast<std::ptrdiff_t>(ny))
                        continue;
                    const auto nb = static_cast<std::size_t>(ii) * ny + static_cast<std::size_t>(jj);
                    if (same(m[nb], value)) {
                        if (!seen[nb]) {
                            seen[nb] = 1;
                            queue.push_back(nb);
                        }
                    } else if (m[nb] > value) {
                        is_mode = false;
                    }
                }
            }
        }
        if (is_mode) ++modes;
    }
    return modes;
}

MeasurePreservingMap identity_map() {
    auto id = [](double x, double y) { return std::array<double, 2>{x, y}; };
    return {"identity", id, id};
}

MeasurePreservingMap rotation_map(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {fmt::format("rotation({})", theta),
            [c, s](double x, double y) { return std::array<double, 2>{c * x - s * y, s * x + c * y}; },
            [c, s](double x, double y) { return std::array<double, 2>{c * x + s * y, -s * x + c * y}; }};
}

MeasurePreservingMap shear_map(std::function<double(double)> g, std::string name) {
    return {std::move(name), [g](double x, double y) { return std::array<double, 2>{x, y + g(x)}; },
            [g](double x, double y) { return std::array<double, 2>{x, y - g(x)}; }};
}

GridDensity pushforward_grid(const GridDensity& grid, const MeasurePreservingMap& map) {
    if (grid.dim() != 2) throw Error("pushforward_grid: two-dimensional grids only");
    const double before = grid.total_mass();
    if (!(before > 0.0)) throw Error("pushforward_grid: grid has no mass");
    GridDensity out = grid;
    const double volume = grid.cell_volume();
    parallel_chunks(out.masses.size(), 1 << 14, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            const auto center = grid.cell_center(c);
            const auto x = map.inverse(center[0], center[1]);
            out.masses[c] = grid.interpolate_density(x[0], x[1]) * volume;
        }
    });
    const double after = out.total_mass();
    const double lost = (before - after) / before;
    if (lost > 0.005)
        throw Error(fmt::format("pushforward_grid: {:.3f}% of the mass leaves the grid under '{}'", 100.0 * lost,
                                map.name));
    for (auto& v : out.masses) v *= before / after;
    return out;
}

}  // namespace flowlab
