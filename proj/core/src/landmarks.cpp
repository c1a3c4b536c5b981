#include "fra/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fra/error.hpp"

namespace fra::raster {

LandmarkSet::LandmarkSet(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.size() != kLandmarkCount) {
        throw InputError("landmark set needs exactly " + std::to_string(kLandmarkCount) + " points, got " +
                         std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Point& p = points_[i];
        if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
            throw InputError("landmark " + std::to_string(i) + " has coordinate (" + std::to_string(p.x) + ", " +
                             std::to_string(p.y) + ") outside [0,1]");
        }
    }
}

BinaryImage::BinaryImage(std::size_t height, std::size_t width)
    : height_(height), width_(width), cells_(height * width, 0) {}

std::size_t BinaryImage::count_set() const noexcept {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

Tensor BinaryImage::to_tensor() const {
    Tensor t(Shape{1, height_, width_});
    for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = cells_[i];
    return t;
}

std::size_t to_pixel(double coord, std::size_t extent) noexcept {
    return static_cast<std::size_t>(std::floor(coord * static_cast<double>(extent - 1) + 0.5));
}

BinaryImage rasterize(const LandmarkSet& landmarks, std::size_t height, std::size_t width, int radius) {
    if (height < 8 || width < 8) {
        throw ConfigError("landmark image must be at least 8x8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
    if (radius < 0) throw ConfigError("stamp radius must be non-negative, got " + std::to_string(radius));
    BinaryImage image(height, width);
    const auto r = static_cast<long long>(radius);
    for (const Point& p : landmarks.points()) {
        const auto cy = static_cast<long long>(to_pixel(p.y, height));
        const auto cx = static_cast<long long>(to_pixel(p.x, width));
        const long long y0 = std::max(0LL, cy - r), y1 = std::min<long long>(static_cast<long long>(height) - 1, cy + r);
        const long long x0 = std::max(0LL, cx - r), x1 = std::min<long long>(static_cast<long long>(width) - 1, cx + r);
        for (long long y = y0; y <= y1; ++y)
            for (long long x = x0; x <= x1; ++x) image.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
    return image;
}

}  // namespace fra::raster
