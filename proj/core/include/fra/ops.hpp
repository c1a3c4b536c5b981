#pragma once

#include <cstdint>
#include <span>

#include "fra/autodiff.hpp"

// Differentiable operation set. Every op records its forward value and a
// backward rule on the operands' tape. Broadcasting is limited to
// scalar-with-tensor; per-feature vectors broadcast over rows only through
// add_bias and affine.
namespace fra::ad {

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);
/// a * b^T for a [m x k], b [n x k] -> [m x n].
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// x [m x n] plus bias [n] on every row (x may also be a vector of length n).
Var add_bias(Var x, Var bias);
/// Per-feature scale and shift over the last axis: y = x * scale + shift.
Var affine(Var x, Var scale, Var shift);

Var relu(Var x);
Var sigmoid(Var x);
/// Natural logarithm; operand must be strictly positive.
Var log(Var x);
/// Row-wise softmax with max subtraction. Rank-1 input is one row.
Var softmax_rows(Var x);

Var reshape(Var x, Shape shape);
/// Concatenation along axis 0 (rows) or 1 (columns) of rank-2 operands, or
/// along axis 0 of rank-1 operands.
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// [R x C] -> [(R/p)(C/p) x p*p]: non-overlapping p x p blocks in row-major
/// block order, each flattened row-major.
Var patchify(Var x, std::size_t patch);

Var sum(Var x);
Var mean(Var x);
/// Mean over axis 0 of [m x n] -> [n].
Var mean_rows(Var x);
/// Unit L2 norm for a vector, or per row for a matrix.
Var l2_normalize(Var x);

/// Inverted dropout driven by a counter-based generator: the mask depends only
/// on (seed, the tape's op counter, element index). rate == 0 returns x.
Var dropout(Var x, double rate, std::uint64_t seed);

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation of x [Cin x H x W] with kernels [Cout x Cin x k x k].
/// bias (optional, invalid Var to skip) has length Cout.
Var conv2d(Var x, Var kernels, Var bias, Conv2dParams params);

struct ConvTranspose2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t output_padding = 0;
};

/// Adjoint of conv2d: x [Cin x H x W], kernels [Cin x Cout x k x k] ->
/// [Cout x H' x W'] with H' = (H-1)*stride - 2*padding + k + output_padding.
Var conv_transpose2d(Var x, Var kernels, Var bias, ConvTranspose2dParams params);

/// Mean binary cross-entropy between predictions p and fixed targets y.
/// p is clamped to [eps, 1-eps]; clamped elements receive no gradient.
Var bce_mean(Var p, const Tensor& target, double eps = 1e-7);

/// Output extent of a convolution; throws ConfigError when not integral.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace fra::ad
