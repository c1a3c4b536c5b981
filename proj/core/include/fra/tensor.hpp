#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fra {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A rank-0 tensor (empty shape) holds a single scalar. The gradient buffer is
/// absent until the first accumulation or an explicit zero_grad() on a tensor
/// that requires gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    Tensor& set_requires_grad(bool on) noexcept;

    bool has_grad() const noexcept { return !grad_.empty(); }
    std::span<double> grad();
    std::span<const double> grad() const;
    /// Resets the gradient to zeros (allocating it when gradients are required).
    void zero_grad();
    void clear_grad() noexcept { grad_.clear(); }
    void accumulate_grad(std::span<const double> delta);

    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    /// Bitwise comparison of shape and values; gradients are ignored.
    friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

private:
    Shape shape_;
    std::vector<double> values_;
    bool requires_grad_ = false;
    std::vector<double> grad_;
};

}  // namespace fra
