#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowlab {

/// Error raised for contract violations and numerical failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A batch of points stored row-major: `count()` rows of `dim()` coordinates.
class Points {
public:
    Points() = default;
    Points(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0) {}

    std::size_t dim() const { return dim_; }
    std::size_t count() const { return dim_ == 0 ? 0 : data_.size() / dim_; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    double& operator()(std::size_t i, std::size_t k) { return data_[i * dim_ + k]; }
    double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Axis-aligned box [lower, upper] in D dimensions.
struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t dim() const { return lower.size(); }
    double volume() const;
};

/// Mean and standard error of a Monte-Carlo estimate.
struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

}  // namespace flowlab
