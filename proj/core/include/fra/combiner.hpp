#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fra/autodiff.hpp"
#include "fra/params.hpp"

namespace fra::combiner {

/// Transformer fusion network dimensions. Defaults follow the reference
/// training table: 4 layers, 4 heads, width 256, feed-forward 256, patch 8.
struct CombinerConfig {
    std::size_t face_dim = 512;
    std::size_t pose_dim = 512;
    std::size_t patch = 8;
    std::size_t model_dim = 256;
    std::size_t ff_dim = 256;
    std::size_t heads = 4;
    std::size_t layers = 4;
    double dropout = 0.4;
    bool positional = true;
    /// Adds the input face embedding to the head output before normalization.
    bool face_skip = true;

    void validate() const;
};

struct FusedGeometry {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t tokens = 0;
    std::size_t token_dim = 0;
};

/// Most square R x C with R*C = total and both divisible by patch. Throws
/// ConfigError listing the factorizations of `total` when none qualifies.
FusedGeometry fused_geometry(std::size_t total, std::size_t patch);

/// Concatenation [face || pose] laid out row-major as rows x cols.
Tensor fuse(std::span<const double> face, std::span<const double> pose, std::size_t rows, std::size_t cols);
ad::Var fuse(ad::Var face, ad::Var pose, std::size_t rows, std::size_t cols);

Tensor patchify(const Tensor& matrix, std::size_t patch);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& tokens, std::size_t rows, std::size_t cols, std::size_t patch);

/// Records every attention weight matrix produced during a forward pass.
struct AttentionTrace {
    std::vector<Tensor> weights;
};

/// softmax_rows(Q K^T / sqrt(d_k)) V.
ad::Var attention(ad::Var q, ad::Var k, ad::Var v, AttentionTrace* trace = nullptr);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct MultiHeadVars {
    std::vector<ad::Var> wq;
    std::vector<ad::Var> wk;
    std::vector<ad::Var> wv;
    ad::Var wo;
};

/// Concat(head_1..head_h) W^O with head_i = attention(x W^Q_i, x W^K_i, x W^V_i).
ad::Var multi_head(ad::Var x, const MultiHeadVars& weights, AttentionTrace* trace = nullptr);

struct ForwardOptions {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    AttentionTrace* trace = nullptr;
};

struct ForwardResult {
    ad::Var output;  ///< unit-norm augmented embedding [face_dim]
    ad::Var pooled;  ///< mean-pooled token representation [model_dim]
};

class Combiner {
public:
    Combiner() = default;
    Combiner(CombinerConfig config, std::uint64_t seed);

    const CombinerConfig& config() const noexcept { return config_; }
    const FusedGeometry& geometry() const noexcept { return geometry_; }

    ForwardResult forward(ad::Tape& tape, ad::Var face, ad::Var pose, const ForwardOptions& options);
    ForwardResult forward(ad::Tape& tape, ad::Var face, ad::Var pose, const ForwardOptions& options) const;
    /// Inference with dropout disabled.
    Tensor forward(const Tensor& face, const Tensor& pose) const;

    /// Transformer stack and mean pooling over pre-patchified tokens
    /// [tokens x patch^2] -> [model_dim].
    ad::Var encode_tokens(ad::Tape& tape, ad::Var tokens, const ForwardOptions& options) const;

    /// Zeroes the learnable positional embeddings.
    void zero_positional();

    std::vector<ad::NamedParam> parameters();
    std::vector<ConstNamedParam> parameters() const;

private:
    struct Layer {
        std::vector<Tensor> wq, wk, wv;
        Tensor wo;
        Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    };

    template <class Self>
    static ad::Var encode_tokens_impl(Self& self, ad::Tape& tape, ad::Var tokens, const ForwardOptions& options);
    template <class Self>
    static ForwardResult forward_impl(Self& self, ad::Tape& tape, ad::Var face, ad::Var pose,
                                      const ForwardOptions& options);
    template <class Self, class F>
    static void visit(Self& self, F&& f);

    CombinerConfig config_;
    FusedGeometry geometry_;
    Tensor patch_w_, patch_b_, positional_;
    std::vector<Layer> layers_;
    Tensor head_w_, head_b_;
    Tensor norm_scale_, norm_shift_;
};

}  // namespace fra::combiner
