#include "fra/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fra/error.hpp"

namespace fra {

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }
    if (shape_numel(shape_) != values_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " needs " +
                             std::to_string(shape_numel(shape_)) + " values, got " +
                             std::to_string(values_.size()));
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return values_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
}

double Tensor::item() const {
    if (values_.size() != 1) {
        throw ContractError("item() requires a single-element tensor, got " + shape_str(shape_));
    }
    return values_[0];
}

Tensor& Tensor::set_requires_grad(bool on) noexcept {
    requires_grad_ = on;
    if (!on) grad_.clear();
    return *this;
}

std::span<double> Tensor::grad() {
    if (grad_.empty()) throw ContractError("tensor " + shape_str(shape_) + " has no gradient");
    return grad_;
}

std::span<const double> Tensor::grad() const {
    if (grad_.empty()) throw ContractError("tensor " + shape_str(shape_) + " has no gradient");
    return grad_;
}

void Tensor::zero_grad() {
    if (requires_grad_) {
        grad_.assign(values_.size(), 0.0);
    } else {
        grad_.clear();
    }
}

void Tensor::accumulate_grad(std::span<const double> delta) {
    if (delta.size() != values_.size()) {
        throw DimensionError("gradient of length " + std::to_string(delta.size()) +
                             " does not match tensor " + shape_str(shape_));
    }
    if (grad_.empty()) grad_.assign(values_.size(), 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) grad_[i] += delta[i];
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) noexcept {
    return a.shape_ == b.shape_ && a.values_.size() == b.values_.size() &&
           (a.values_.empty() ||
            std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0);
}

}  // namespace fra
