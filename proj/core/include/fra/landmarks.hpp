#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fra/tensor.hpp"

namespace fra::raster {

inline constexpr std::size_t kLandmarkCount = 68;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Exactly 68 facial keypoints with coordinates normalized to [0, 1] over the
/// aligned face crop.
class LandmarkSet {
public:
    /// Throws InputError on a wrong point count or an out-of-range coordinate.
    explicit LandmarkSet(std::vector<Point> points);

    std::span<const Point> points() const noexcept { return points_; }
    const Point& operator[](std::size_t i) const noexcept { return points_[i]; }

    friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;

private:
    std::vector<Point> points_;
};

/// H x W grid over {0, 1}.
class BinaryImage {
public:
    BinaryImage(std::size_t height, std::size_t width);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::uint8_t at(std::size_t row, std::size_t col) const noexcept { return cells_[row * width_ + col]; }
    void set(std::size_t row, std::size_t col) noexcept { cells_[row * width_ + col] = 1; }
    std::span<const std::uint8_t> cells() const noexcept { return cells_; }
    std::size_t count_set() const noexcept;

    /// [1 x H x W] tensor of 0.0 / 1.0.
    Tensor to_tensor() const;

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint8_t> cells_;
};

/// Round-half-up pixel index of a normalized coordinate over `extent` pixels.
std::size_t to_pixel(double coord, std::size_t extent) noexcept;

/// Stamps each landmark as a square of Chebyshev radius `radius` centred on
/// (to_pixel(y, height), to_pixel(x, width)), clipped at the borders.
BinaryImage rasterize(const LandmarkSet& landmarks, std::size_t height, std::size_t width, int radius);

}  // namespace fra::raster
