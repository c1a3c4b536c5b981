#include "fra/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "conv_kernels.hpp"
#include "fra/error.hpp"
#include "fra/rng.hpp"

namespace fra::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

CMatMap cmat(const Tensor& t, std::size_t rows, std::size_t cols) {
    return CMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap mat(std::span<double> s, std::size_t rows, std::size_t cols) {
    return MatMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank2(std::string_view op, const Tensor& t) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 operand, got " + shape_str(t.shape()));
    }
}

// Shapes for elementwise binary ops: equal shapes, or one side a single element.
enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast elementwise_mode(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Broadcast::kNone;
    if (a.numel() == 1) return Broadcast::kLeftScalar;
    if (b.numel() == 1) return Broadcast::kRightScalar;
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class Fwd, class DA, class DB>
Var binary_elementwise(std::string_view op, Var a, Var b, Fwd fwd, DA da, DB db) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast mode = elementwise_mode(op, av, bv);
    const Shape out_shape = mode == Broadcast::kLeftScalar ? bv.shape() : av.shape();
    Tensor out(out_shape);
    const std::size_t n = out.numel();
    auto ai = [&](std::size_t i) { return mode == Broadcast::kLeftScalar ? 0 : i; };
    auto bi = [&](std::size_t i) { return mode == Broadcast::kRightScalar ? 0 : i; };
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ai(i)], bv[bi(i)]);

    const Var inputs[] = {a, b};
    return a.tape().record(op, inputs, std::move(out), [mode, da, db](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        const std::size_t ia = in[0], ib = in[1];
        const Tensor& av = tape.value(ia);
        const Tensor& bv = tape.value(ib);
        std::span<const double> g = tape.adjoint(self);
        const std::size_t n = g.size();
        auto ai = [&](std::size_t i) { return mode == Broadcast::kLeftScalar ? 0 : i; };
        auto bi = [&](std::size_t i) { return mode == Broadcast::kRightScalar ? 0 : i; };
        if (tape.needs_grad(ia)) {
            auto ga = tape.adjoint(ia);
            for (std::size_t i = 0; i < n; ++i) ga[ai(i)] += g[i] * da(av[ai(i)], bv[bi(i)]);
        }
        if (tape.needs_grad(ib)) {
            auto gb = tape.adjoint(ib);
            for (std::size_t i = 0; i < n; ++i) gb[bi(i)] += g[i] * db(av[ai(i)], bv[bi(i)]);
        }
    });
}

// Unary elementwise op whose derivative is expressed through (input, output).
template <class Fwd, class Deriv>
Var unary_elementwise(std::string_view op, Var x, Fwd fwd, Deriv deriv) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
    const Var inputs[] = {x};
    return x.tape().record(op, inputs, std::move(out), [deriv](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        const Tensor& xv = tape.value(ix);
        const Tensor& yv = tape.value(self);
        std::span<const double> g = tape.adjoint(self);
        auto gx = tape.adjoint(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ConfigError("convolution stride must be positive");
    const std::size_t padded = in + 2 * padding;
    if (padded < kernel) {
        throw ConfigError("convolution kernel " + std::to_string(kernel) + " exceeds padded extent " +
                          std::to_string(padded));
    }
    if ((padded - kernel) % stride != 0) {
        throw ConfigError("convolution output extent (" + std::to_string(in) + "+2*" + std::to_string(padding) +
                          "-" + std::to_string(kernel) + ")/" + std::to_string(stride) + "+1 is not integral");
    }
    return (padded - kernel) / stride + 1;
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by " + shape_str(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out(Shape{m, n});
    mat(out.values(), m, n).noalias() = cmat(av, m, k) * cmat(bv, k, n);
    const Var inputs[] = {a, b};
    return a.tape().record("matmul", inputs, std::move(out), [m, k, n](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        const CMatMap dc(tape.adjoint(self).data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (tape.needs_grad(in[0])) {
            mat(tape.adjoint(in[0]), m, k).noalias() += dc * cmat(tape.value(in[1]), k, n).transpose();
        }
        if (tape.needs_grad(in[1])) {
            mat(tape.adjoint(in[1]), k, n).noalias() += cmat(tape.value(in[0]), m, k).transpose() * dc;
        }
    });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
        throw DimensionError("matmul_nt: cannot multiply " + shape_str(av.shape()) + " by the transpose of " +
                             shape_str(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    Tensor out(Shape{m, n});
    mat(out.values(), m, n).noalias() = cmat(av, m, k) * cmat(bv, n, k).transpose();
    const Var inputs[] = {a, b};
    return a.tape().record("matmul_nt", inputs, std::move(out), [m, k, n](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        const CMatMap dc(tape.adjoint(self).data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (tape.needs_grad(in[0])) {
            mat(tape.adjoint(in[0]), m, k).noalias() += dc * cmat(tape.value(in[1]), n, k);
        }
        if (tape.needs_grad(in[1])) {
            mat(tape.adjoint(in[1]), n, k).noalias() += dc.transpose() * cmat(tape.value(in[0]), m, k);
        }
    });
}

Var add(Var a, Var b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
    return unary_elementwise(
        "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
    return unary_elementwise(
        "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

namespace {

// Rows x features view of an operand for per-feature ops.
std::pair<std::size_t, std::size_t> feature_layout(std::string_view op, const Tensor& x, std::size_t features) {
    if (x.rank() == 1 && x.dim(0) == features) return {1, features};
    if (x.rank() == 2 && x.dim(1) == features) return {x.dim(0), features};
    throw DimensionError(std::string(op) + ": operand " + shape_str(x.shape()) +
                         " incompatible with per-feature vector of length " + std::to_string(features));
}

std::size_t vector_length(std::string_view op, const Tensor& v) {
    if (v.rank() != 1) throw DimensionError(std::string(op) + ": expected a vector, got " + shape_str(v.shape()));
    return v.dim(0);
}

}  // namespace

Var add_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const std::size_t n = vector_length("add_bias", bias.value());
    const auto [rows, cols] = feature_layout("add_bias", xv, n);
    Tensor out = xv;
    out.clear_grad();
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    const Var inputs[] = {x, bias};
    return x.tape().record("add_bias", inputs, std::move(out), [rows, cols](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        std::span<const double> g = tape.adjoint(self);
        if (tape.needs_grad(in[0])) {
            auto gx = tape.adjoint(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (tape.needs_grad(in[1])) {
            auto gb = tape.adjoint(in[1]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
    });
}

Var affine(Var x, Var scale_v, Var shift) {
    const Tensor& xv = x.value();
    const std::size_t n = vector_length("affine", scale_v.value());
    if (vector_length("affine", shift.value()) != n) {
        throw DimensionError("affine: scale " + shape_str(scale_v.shape()) + " and shift " +
                             shape_str(shift.shape()) + " differ");
    }
    const auto [rows, cols] = feature_layout("affine", xv, n);
    const Tensor& sv = scale_v.value();
    const Tensor& tv = shift.value();
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * sv[c] + tv[c];
    const Var inputs[] = {x, scale_v, shift};
    return x.tape().record("affine", inputs, std::move(out), [rows, cols](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        std::span<const double> g = tape.adjoint(self);
        const Tensor& xv = tape.value(in[0]);
        const Tensor& sv = tape.value(in[1]);
        if (tape.needs_grad(in[0])) {
            auto gx = tape.adjoint(in[0]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * sv[c];
        }
        if (tape.needs_grad(in[1])) {
            auto gs = tape.adjoint(in[1]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gs[c] += g[r * cols + c] * xv[r * cols + c];
        }
        if (tape.needs_grad(in[2])) {
            auto gt = tape.adjoint(in[2]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gt[c] += g[r * cols + c];
        }
    });
}

Var relu(Var x) {
    return unary_elementwise(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
    return unary_elementwise(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var log(Var x) {
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < xv.numel(); ++i) {
        if (!(xv[i] > 0.0)) throw ContractError("log: non-positive operand at index " + std::to_string(i));
    }
    return unary_elementwise(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var softmax_rows(Var x) {
    const Tensor& xv = x.value();
    std::size_t rows = 1, cols = 0;
    if (xv.rank() == 1) {
        cols = xv.dim(0);
    } else if (xv.rank() == 2) {
        rows = xv.dim(0);
        cols = xv.dim(1);
    } else {
        throw DimensionError("softmax_rows: expected rank 1 or 2, got " + shape_str(xv.shape()));
    }
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            total += o[c];
        }
        for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
    }
    const Var inputs[] = {x};
    return x.tape().record("softmax_rows", inputs, std::move(out), [rows, cols](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        const Tensor& y = tape.value(self);
        std::span<const double> g = tape.adjoint(self);
        auto gx = tape.adjoint(ix);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
            }
        }
    });
}

Var reshape(Var x, Shape shape) {
    const Tensor& xv = x.value();
    if (shape_numel(shape) != xv.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
    }
    Tensor out = xv.reshaped(std::move(shape));
    const Var inputs[] = {x};
    return x.tape().record("reshape", inputs, std::move(out), [](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        std::span<const double> g = tape.adjoint(self);
        auto gx = tape.adjoint(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no operands");
    const Tensor& first = parts[0].value();
    const std::size_t rank = first.rank();
    if (rank == 0 || rank > 2 || axis >= rank) {
        throw DimensionError("concat: unsupported axis " + std::to_string(axis) + " for shape " +
                             shape_str(first.shape()));
    }
    // Treat every operand as [outer x inner] blocks where concatenation happens along inner.
    // axis 0: each operand contributes a contiguous block. axis 1 (rank 2): per-row blocks.
    const std::size_t rows = (rank == 2 && axis == 1) ? first.dim(0) : 1;
    std::vector<std::size_t> widths;
    std::size_t total_width = 0;
    Shape out_shape = first.shape();
    out_shape[axis] = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        bool ok = v.rank() == rank;
        for (std::size_t d = 0; ok && d < rank; ++d) {
            if (d != axis && v.dim(d) != first.dim(d)) ok = false;
        }
        if (!ok) {
            throw DimensionError("concat: operand " + shape_str(v.shape()) + " incompatible with " +
                                 shape_str(first.shape()) + " along axis " + std::to_string(axis));
        }
        out_shape[axis] += v.dim(axis);
        widths.push_back(v.numel() / rows);
        total_width += widths.back();
    }
    Tensor out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total_width + offset);
        }
        offset += widths[k];
    }
    return parts[0].tape().record(
        "concat", parts, std::move(out), [rows, widths, total_width](Tape& tape, std::size_t self) {
            const auto& in = tape.inputs_of(self);
            std::span<const double> g = tape.adjoint(self);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < in.size(); ++k) {
                if (tape.needs_grad(in[k])) {
                    auto gk = tape.adjoint(in[k]);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < widths[k]; ++c)
                            gk[r * widths[k] + c] += g[r * total_width + offset + c];
                }
                offset += widths[k];
            }
        });
}

Var patchify(Var x, std::size_t patch) {
    const Tensor& xv = x.value();
    require_rank2("patchify", xv);
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (patch == 0 || rows % patch != 0 || cols % patch != 0) {
        throw ConfigError("patchify: patch size " + std::to_string(patch) + " does not divide " +
                          shape_str(xv.shape()));
    }
    const std::size_t br = rows / patch, bc = cols / patch, tok = patch * patch;
    // index[j] = source offset of output element j
    std::vector<std::size_t> index(xv.numel());
    for (std::size_t bi = 0; bi < br; ++bi)
        for (std::size_t bj = 0; bj < bc; ++bj)
            for (std::size_t r = 0; r < patch; ++r)
                for (std::size_t c = 0; c < patch; ++c)
                    index[(bi * bc + bj) * tok + r * patch + c] = (bi * patch + r) * cols + bj * patch + c;
    Tensor out(Shape{br * bc, tok});
    for (std::size_t j = 0; j < index.size(); ++j) out[j] = xv[index[j]];
    const Var inputs[] = {x};
    return x.tape().record("patchify", inputs, std::move(out),
                           [index = std::move(index)](Tape& tape, std::size_t self) {
                               const std::size_t ix = tape.inputs_of(self)[0];
                               std::span<const double> g = tape.adjoint(self);
                               auto gx = tape.adjoint(ix);
                               for (std::size_t j = 0; j < index.size(); ++j) gx[index[j]] += g[j];
                           });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    double total = 0.0;
    for (double v : xv.values()) total += v;
    const Var inputs[] = {x};
    return x.tape().record("sum", inputs, Tensor::scalar(total), [](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        const double g = tape.adjoint(self)[0];
        for (double& v : tape.adjoint(ix)) v += g;
    });
}

Var mean(Var x) {
    const Tensor& xv = x.value();
    double total = 0.0;
    for (double v : xv.values()) total += v;
    const double n = static_cast<double>(xv.numel());
    const Var inputs[] = {x};
    return x.tape().record("mean", inputs, Tensor::scalar(total / n), [n](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        const double g = tape.adjoint(self)[0] / n;
        for (double& v : tape.adjoint(ix)) v += g;
    });
}

Var mean_rows(Var x) {
    const Tensor& xv = x.value();
    require_rank2("mean_rows", xv);
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor out(Shape{cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += xv[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(rows);
    const Var inputs[] = {x};
    return x.tape().record("mean_rows", inputs, std::move(out), [rows, cols](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        std::span<const double> g = tape.adjoint(self);
        auto gx = tape.adjoint(ix);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] * inv;
    });
}

Var l2_normalize(Var x) {
    constexpr double kMinNorm = 1e-12;
    const Tensor& xv = x.value();
    std::size_t rows = 1, cols = 0;
    if (xv.rank() == 1) {
        cols = xv.dim(0);
    } else if (xv.rank() == 2) {
        rows = xv.dim(0);
        cols = xv.dim(1);
    } else {
        throw DimensionError("l2_normalize: expected rank 1 or 2, got " + shape_str(xv.shape()));
    }
    Tensor out(xv.shape());
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ss += xv[r * cols + c] * xv[r * cols + c];
        norms[r] = std::max(std::sqrt(ss), kMinNorm);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] / norms[r];
    }
    const Var inputs[] = {x};
    return x.tape().record("l2_normalize", inputs, std::move(out),
                           [rows, cols, norms = std::move(norms)](Tape& tape, std::size_t self) {
                               const std::size_t ix = tape.inputs_of(self)[0];
                               const Tensor& y = tape.value(self);
                               std::span<const double> g = tape.adjoint(self);
                               auto gx = tape.adjoint(ix);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       gx[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norms[r];
                                   }
                               }
                           });
}

Var dropout(Var x, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (rate == 0.0) return x;
    const std::uint64_t stream = x.tape().next_counter();
    const Tensor& xv = x.value();
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(xv.numel());
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = counter_uniform(seed, stream, i) < rate ? 0.0 : keep_scale;
        out[i] = xv[i] * mask[i];
    }
    const Var inputs[] = {x};
    return x.tape().record("dropout", inputs, std::move(out), [mask = std::move(mask)](Tape& tape, std::size_t self) {
        const std::size_t ix = tape.inputs_of(self)[0];
        std::span<const double> g = tape.adjoint(self);
        auto gx = tape.adjoint(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Var conv2d(Var x, Var kernels, Var bias, Conv2dParams params) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernels.value();
    if (xv.rank() != 3 || kv.rank() != 4 || kv.dim(1) != xv.dim(0) || kv.dim(2) != kv.dim(3)) {
        throw DimensionError("conv2d: input " + shape_str(xv.shape()) + " incompatible with kernels " +
                             shape_str(kv.shape()));
    }
    const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const std::size_t cout = kv.dim(0), k = kv.dim(2);
    const std::size_t ho = conv_output_extent(h, k, params.stride, params.padding);
    const std::size_t wo = conv_output_extent(w, k, params.stride, params.padding);
    const bool has_bias = bias.valid();
    if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != cout)) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) +
                             " output channels");
    }
    const detail::ConvGeometry geo{cin, h, w, k, params.stride, params.padding, ho, wo};
    std::vector<double> cols(geo.col_rows() * geo.col_cols());
    detail::im2col(geo, xv.data(), cols.data());

    Tensor out(Shape{cout, ho, wo});
    const auto plane = static_cast<Eigen::Index>(ho * wo);
    const auto patch = static_cast<Eigen::Index>(geo.col_rows());
    MatMap(out.data(), static_cast<Eigen::Index>(cout), plane).noalias() =
        CMatMap(kv.data(), static_cast<Eigen::Index>(cout), patch) * CMatMap(cols.data(), patch, plane);
    if (has_bias) {
        const Tensor& bv = bias.value();
        for (std::size_t c = 0; c < cout; ++c)
            for (std::size_t i = 0; i < ho * wo; ++i) out[c * ho * wo + i] += bv[c];
    }

    std::vector<Var> inputs{x, kernels};
    if (has_bias) inputs.push_back(bias);
    return x.tape().record(
        "conv2d", inputs, std::move(out),
        [geo, cout, has_bias, cols = std::move(cols)](Tape& tape, std::size_t self) {
            const auto& in = tape.inputs_of(self);
            const auto plane = static_cast<Eigen::Index>(geo.out_h * geo.out_w);
            const auto patch = static_cast<Eigen::Index>(geo.col_rows());
            const auto co = static_cast<Eigen::Index>(cout);
            const CMatMap dout(tape.adjoint(self).data(), co, plane);
            if (tape.needs_grad(in[1])) {
                MatMap(tape.adjoint(in[1]).data(), co, patch).noalias() +=
                    dout * CMatMap(cols.data(), patch, plane).transpose();
            }
            if (tape.needs_grad(in[0])) {
                std::vector<double> dcols(cols.size());
                MatMap(dcols.data(), patch, plane).noalias() =
                    CMatMap(tape.value(in[1]).data(), co, patch).transpose() * dout;
                detail::col2im(geo, dcols.data(), tape.adjoint(in[0]).data());
            }
            if (has_bias && tape.needs_grad(in[2])) {
                auto gb = tape.adjoint(in[2]);
                for (Eigen::Index c = 0; c < co; ++c) gb[static_cast<std::size_t>(c)] += dout.row(c).sum();
            }
        });
}

Var conv_transpose2d(Var x, Var kernels, Var bias, ConvTranspose2dParams params) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernels.value();
    if (xv.rank() != 3 || kv.rank() != 4 || kv.dim(0) != xv.dim(0) || kv.dim(2) != kv.dim(3)) {
        throw DimensionError("conv_transpose2d: input " + shape_str(xv.shape()) + " incompatible with kernels " +
                             shape_str(kv.shape()));
    }
    if (params.stride == 0 || params.output_padding >= params.stride) {
        throw ConfigError("conv_transpose2d: output_padding must be smaller than a positive stride");
    }
    const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const std::size_t cout = kv.dim(1), k = kv.dim(2);
    const long long ho_signed = static_cast<long long>((h - 1) * params.stride + k + params.output_padding) -
                                2 * static_cast<long long>(params.padding);
    const long long wo_signed = static_cast<long long>((w - 1) * params.stride + k + params.output_padding) -
                                2 * static_cast<long long>(params.padding);
    if (ho_signed <= 0 || wo_signed <= 0) throw ConfigError("conv_transpose2d: non-positive output extent");
    const auto ho = static_cast<std::size_t>(ho_signed);
    const auto wo = static_cast<std::size_t>(wo_signed);
    const bool has_bias = bias.valid();
    if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != cout)) {
        throw DimensionError("conv_transpose2d: bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(cout) + " output channels");
    }
    // The output plays the role of a convolution input whose output is x.
    const detail::ConvGeometry geo{cout, ho, wo, k, params.stride, params.padding, h, w};
    const auto plane = static_cast<Eigen::Index>(h * w);
    const auto patch = static_cast<Eigen::Index>(geo.col_rows());
    const auto ci = static_cast<Eigen::Index>(cin);
    std::vector<double> cols(geo.col_rows() * geo.col_cols());
    MatMap(cols.data(), patch, plane).noalias() =
        CMatMap(kv.data(), ci, patch).transpose() * CMatMap(xv.data(), ci, plane);
    Tensor out(Shape{cout, ho, wo});
    detail::col2im(geo, cols.data(), out.data());
    if (has_bias) {
        const Tensor& bv = bias.value();
        for (std::size_t c = 0; c < cout; ++c)
            for (std::size_t i = 0; i < ho * wo; ++i) out[c * ho * wo + i] += bv[c];
    }

    std::vector<Var> inputs{x, kernels};
    if (has_bias) inputs.push_back(bias);
    return x.tape().record("conv_transpose2d", inputs, std::move(out), [geo, cin, has_bias](Tape& tape, std::size_t self) {
        const auto& in = tape.inputs_of(self);
        const auto plane = static_cast<Eigen::Index>(geo.out_h * geo.out_w);
        const auto patch = static_cast<Eigen::Index>(geo.col_rows());
        const auto ci = static_cast<Eigen::Index>(cin);
        std::span<const double> g = tape.adjoint(self);
        std::vector<double> gcols(geo.col_rows() * geo.col_cols());
        detail::im2col(geo, g.data(), gcols.data());
        const CMatMap gc(gcols.data(), patch, plane);
        if (tape.needs_grad(in[0])) {
            MatMap(tape.adjoint(in[0]).data(), ci, plane).noalias() += CMatMap(tape.value(in[1]).data(), ci, patch) * gc;
        }
        if (tape.needs_grad(in[1])) {
            MatMap(tape.adjoint(in[1]).data(), ci, patch).noalias() +=
                CMatMap(tape.value(in[0]).data(), ci, plane) * gc.transpose();
        }
        if (has_bias && tape.needs_grad(in[2])) {
            auto gb = tape.adjoint(in[2]);
            const std::size_t area = geo.in_h * geo.in_w;
            for (std::size_t c = 0; c < geo.channels; ++c)
                for (std::size_t i = 0; i < area; ++i) gb[c] += g[c * area + i];
        }
    });
}

Var bce_mean(Var p, const Tensor& target, double eps) {
    const Tensor& pv = p.value();
    if (pv.shape() != target.shape()) {
        throw ContractError("bce: reconstruction " + shape_str(pv.shape()) + " vs target " +
                            shape_str(target.shape()));
    }
    if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("bce: eps must lie in (0, 0.5)");
    const double n = static_cast<double>(pv.numel());
    double total = 0.0;
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        const double q = std::clamp(pv[i], eps, 1.0 - eps);
        const double y = target[i];
        total -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    }
    const Var inputs[] = {p};
    return p.tape().record("bce_mean", inputs, Tensor::scalar(total / n),
                           [target, eps, n](Tape& tape, std::size_t self) {
                               const std::size_t ip = tape.inputs_of(self)[0];
                               const Tensor& pv = tape.value(ip);
                               const double g = tape.adjoint(self)[0] / n;
                               auto gp = tape.adjoint(ip);
                               for (std::size_t i = 0; i < pv.numel(); ++i) {
                                   const double q = pv[i];
                                   if (q < eps || q > 1.0 - eps) continue;
                                   const double y = target[i];
                                   gp[i] += g * (-y / q + (1.0 - y) / (1.0 - q));
                               }
                           });
}

}  // namespace fra::ad
