#pragma once

#include <cstddef>

namespace fra::ad::detail {

// Convolution geometry seen from the correlation direction: an input plane of
// channels x in_h x in_w is scanned by k x k windows to give out_h x out_w.
struct ConvGeometry {
    std::size_t channels;
    std::size_t in_h;
    std::size_t in_w;
    std::size_t kernel;
    std::size_t stride;
    std::size_t padding;
    std::size_t out_h;
    std::size_t out_w;

    std::size_t col_rows() const noexcept { return channels * kernel * kernel; }
    std::size_t col_cols() const noexcept { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx][oy*out_w + ox] = x[c][oy*s - p + ky][ox*s - p + kx] (zero outside).
inline void im2col(const ConvGeometry& g, const double* x, double* cols) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.padding);
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long long ix =
                            static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long long>(g.in_h) &&
                                            ix < static_cast<long long>(g.in_w);
                        row[oy * g.out_w + ox] =
                            inside ? x[(c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)]
                                   : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds cols back into x.
inline void col2im(const ConvGeometry& g, const double* cols, double* x) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.padding);
                    if (iy < 0 || iy >= static_cast<long long>(g.in_h)) continue;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long long ix =
                            static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.padding);
                        if (ix < 0 || ix >= static_cast<long long>(g.in_w)) continue;
                        x[(c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)] +=
                            row[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

}  // namespace fra::ad::detail
