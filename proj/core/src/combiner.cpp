#include "fra/combiner.hpp"

#include <cmath>
#include <string>

#include "fra/error.hpp"
#include "fra/ops.hpp"

namespace fra::combiner {

void CombinerConfig::validate() const {
    if (face_dim == 0 || pose_dim == 0) throw ConfigError("combiner: face_dim and pose_dim must be positive");
    if (patch == 0) throw ConfigError("combiner: patch must be positive");
    if (model_dim == 0 || ff_dim == 0 || layers == 0) {
        throw ConfigError("combiner: model_dim, ff_dim and layers must be positive");
    }
    if (heads == 0 || model_dim % heads != 0) {
        throw ConfigError("combiner: model_dim " + std::to_string(model_dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("combiner: dropout must lie in [0, 1)");
    (void)fused_geometry(face_dim + pose_dim, patch);
}

FusedGeometry fused_geometry(std::size_t total, std::size_t patch) {
    if (patch == 0) throw ConfigError("fuse: patch size must be positive");
    FusedGeometry best;
    std::string options;
    for (std::size_t r = 1; r <= total; ++r) {
        if (total % r != 0) continue;
        const std::size_t c = total / r;
        if (!options.empty()) options += ", ";
        options += "(" + std::to_string(r) + "," + std::to_string(c) + ")";
        if (r % patch != 0 || c % patch != 0) continue;
        const auto gap = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
        if (best.rows == 0 || gap(r, c) < gap(best.rows, best.cols)) {
            best.rows = r;
            best.cols = c;
        }
    }
    if (best.rows == 0) {
        throw ConfigError("fuse: length " + std::to_string(total) + " has no R x C layout with both extents divisible by patch " +
                          std::to_string(patch) + "; factorizations: " + options);
    }
    best.tokens = (best.rows / patch) * (best.cols / patch);
    best.token_dim = patch * patch;
    return best;
}

ad::Var fuse(ad::Var face, ad::Var pose, std::size_t rows, std::size_t cols) {
    if (face.value().rank() != 1 || pose.value().rank() != 1) {
        throw DimensionError("fuse: expected vectors, got " + shape_str(face.shape()) + " and " +
                             shape_str(pose.shape()));
    }
    const std::size_t total = face.value().numel() + pose.value().numel();
    if (rows * cols != total) {
        const auto g = fused_geometry(total, 1);
        throw ConfigError("fuse: cannot lay out " + std::to_string(total) + " values as " + std::to_string(rows) +
                          "x" + std::to_string(cols) + " (most square option " + std::to_string(g.rows) + "x" +
                          std::to_string(g.cols) + ")");
    }
    return ad::reshape(ad::concat({face, pose}, 0), {rows, cols});
}

Tensor fuse(std::span<const double> face, std::span<const double> pose, std::size_t rows, std::size_t cols) {
    ad::Tape tape(ad::GradMode::kDisabled);
    auto f = tape.input(Tensor::vector({face.begin(), face.end()}));
    auto p = tape.input(Tensor::vector({pose.begin(), pose.end()}));
    return fuse(f, p, rows, cols).value();
}

Tensor patchify(const Tensor& matrix, std::size_t patch) {
    ad::Tape tape(ad::GradMode::kDisabled);
    return ad::patchify(tape.input(matrix), patch).value();
}

Tensor unpatchify(const Tensor& tokens, std::size_t rows, std::size_t cols, std::size_t patch) {
    if (patch == 0 || rows % patch != 0 || cols % patch != 0) {
        throw ConfigError("unpatchify: patch " + std::to_string(patch) + " does not divide " + std::to_string(rows) +
                          "x" + std::to_string(cols));
    }
    const std::size_t bc = cols / patch;
    const Shape expected{(rows / patch) * bc, patch * patch};
    if (tokens.shape() != expected) {
        throw DimensionError("unpatchify: tokens " + shape_str(tokens.shape()) + " expected " + shape_str(expected));
    }
    Tensor m(Shape{rows, cols});
    for (std::size_t t = 0; t < expected[0]; ++t)
        for (std::size_t r = 0; r < patch; ++r)
            for (std::size_t c = 0; c < patch; ++c)
                m.at((t / bc) * patch + r, (t % bc) * patch + c) = tokens.at(t, r * patch + c);
    return m;
}

ad::Var attention(ad::Var q, ad::Var k, ad::Var v, AttentionTrace* trace) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.dim(1) != kv.dim(1) || kv.dim(0) != vv.dim(0)) {
        throw DimensionError("attention: Q " + shape_str(qv.shape()) + ", K " + shape_str(kv.shape()) + ", V " +
                             shape_str(vv.shape()) + " are inconsistent");
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(qv.dim(1)));
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_dk));
    if (trace) trace->weights.push_back(weights.value());
    return ad::matmul(weights, v);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    ad::Tape tape(ad::GradMode::kDisabled);
    return attention(tape.input(q), tape.input(k), tape.input(v)).value();
}

ad::Var multi_head(ad::Var x, const MultiHeadVars& w, AttentionTrace* trace) {
    const std::size_t h = w.wq.size();
    if (h == 0 || w.wk.size() != h || w.wv.size() != h) {
        throw ConfigError("multi_head: need the same positive number of Q/K/V projections");
    }
    std::size_t concat_width = 0;
    std::vector<ad::Var> heads;
    heads.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        ad::Var q = ad::matmul(x, w.wq[i]);
        ad::Var k = ad::matmul(x, w.wk[i]);
        ad::Var v = ad::matmul(x, w.wv[i]);
        concat_width += v.value().dim(1);
        heads.push_back(attention(q, k, v, trace));
    }
    if (concat_width != w.wo.value().dim(0)) {
        throw DimensionError("multi_head: concatenated heads of width " + std::to_string(concat_width) +
                             " do not match W^O " + shape_str(w.wo.shape()));
    }
    ad::Var joined = h == 1 ? heads[0] : ad::concat(heads, 1);
    return ad::matmul(joined, w.wo);
}

Combiner::Combiner(CombinerConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    geometry_ = fused_geometry(config_.face_dim + config_.pose_dim, config_.patch);
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.model_dim;
    const std::size_t dk = d / config_.heads;
    const auto xavier = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    };
    const double residual_gain = 1.0 / std::sqrt(2.0 * static_cast<double>(config_.layers));

    patch_w_ = uniform_param({geometry_.token_dim, d}, xavier(geometry_.token_dim, d), rng);
    patch_b_ = constant_param({d}, 0.0);
    positional_ = normal_param({geometry_.tokens, d}, 0.02, rng);
    if (!config_.positional) zero_positional();
    for (std::size_t l = 0; l < config_.layers; ++l) {
        Layer layer;
        for (std::size_t h = 0; h < config_.heads; ++h) {
            layer.wq.push_back(uniform_param({d, dk}, xavier(d, dk), rng));
            layer.wk.push_back(uniform_param({d, dk}, xavier(d, dk), rng));
            layer.wv.push_back(uniform_param({d, dk}, xavier(d, dk), rng));
        }
        layer.wo = uniform_param({d, d}, residual_gain * xavier(d, d), rng);
        layer.ff1_w = uniform_param({d, config_.ff_dim}, xavier(d, config_.ff_dim), rng);
        layer.ff1_b = constant_param({config_.ff_dim}, 0.0);
        layer.ff2_w = uniform_param({config_.ff_dim, d}, residual_gain * xavier(config_.ff_dim, d), rng);
        layer.ff2_b = constant_param({d}, 0.0);
        layers_.push_back(std::move(layer));
    }
    const double head_gain = config_.face_skip ? 0.1 : 1.0;
    head_w_ = uniform_param({d, config_.face_dim}, head_gain * xavier(d, config_.face_dim), rng);
    head_b_ = constant_param({config_.face_dim}, 0.0);
    norm_scale_ = constant_param({config_.face_dim}, 1.0);
    norm_shift_ = constant_param({config_.face_dim}, 0.0);
}

void Combiner::zero_positional() {
    std::fill(positional_.values().begin(), positional_.values().end(), 0.0);
}

template <class Self, class F>
void Combiner::visit(Self& self, F&& f) {
    f(std::string("comb.patch.w"), self.patch_w_);
    f(std::string("comb.patch.b"), self.patch_b_);
    f(std::string("comb.positional"), self.positional_);
    for (std::size_t l = 0; l < self.layers_.size(); ++l) {
        auto& layer = self.layers_[l];
        const std::string p = "comb.layer" + std::to_string(l) + ".";
        for (std::size_t h = 0; h < layer.wq.size(); ++h) {
            const std::string hp = p + "head" + std::to_string(h) + ".";
            f(hp + "wq", layer.wq[h]);
            f(hp + "wk", layer.wk[h]);
            f(hp + "wv", layer.wv[h]);
        }
        f(p + "wo", layer.wo);
        f(p + "ff1.w", layer.ff1_w);
        f(p + "ff1.b", layer.ff1_b);
        f(p + "ff2.w", layer.ff2_w);
        f(p + "ff2.b", layer.ff2_b);
    }
    f(std::string("comb.head.w"), self.head_w_);
    f(std::string("comb.head.b"), self.head_b_);
    f(std::string("comb.norm.scale"), self.norm_scale_);
    f(std::string("comb.norm.shift"), self.norm_shift_);
}

std::vector<ad::NamedParam> Combiner::parameters() {
    std::vector<ad::NamedParam> out;
    visit(*this, [&](std::string name, Tensor& t) { out.push_back({std::move(name), &t}); });
    return out;
}

std::vector<ConstNamedParam> Combiner::parameters() const {
    std::vector<ConstNamedParam> out;
    visit(*this, [&](std::string name, const Tensor& t) { out.push_back({std::move(name), &t}); });
    return out;
}

template <class Self>
ad::Var Combiner::encode_tokens_impl(Self& self, ad::Tape& tape, ad::Var tokens, const ForwardOptions& options) {
    const auto& cfg = self.config_;
    const Shape expected{self.geometry_.tokens, self.geometry_.token_dim};
    if (tokens.shape() != expected) {
        throw DimensionError("combiner/tokens: got " + shape_str(tokens.shape()) + ", expected " + shape_str(expected));
    }
    const double rate = options.train ? cfg.dropout : 0.0;
    ad::Var x = ad::add_bias(ad::matmul(tokens, tape.parameter(self.patch_w_)), tape.parameter(self.patch_b_));
    if (cfg.positional) x = ad::add(x, tape.parameter(self.positional_));
    for (auto& layer : self.layers_) {
        MultiHeadVars mh;
        for (std::size_t h = 0; h < layer.wq.size(); ++h) {
            mh.wq.push_back(tape.parameter(layer.wq[h]));
            mh.wk.push_back(tape.parameter(layer.wk[h]));
            mh.wv.push_back(tape.parameter(layer.wv[h]));
        }
        mh.wo = tape.parameter(layer.wo);
        x = ad::add(x, ad::dropout(multi_head(x, mh, options.trace), rate, options.dropout_seed));
        ad::Var f = ad::relu(ad::add_bias(ad::matmul(x, tape.parameter(layer.ff1_w)), tape.parameter(layer.ff1_b)));
        f = ad::add_bias(ad::matmul(f, tape.parameter(layer.ff2_w)), tape.parameter(layer.ff2_b));
        x = ad::add(x, ad::dropout(f, rate, options.dropout_seed));
    }
    return ad::mean_rows(x);
}

template <class Self>
ForwardResult Combiner::forward_impl(Self& self, ad::Tape& tape, ad::Var face, ad::Var pose,
                                     const ForwardOptions& options) {
    const auto& cfg = self.config_;
    if (face.shape() != Shape{cfg.face_dim}) {
        throw DimensionError("combiner/fuse: face embedding " + shape_str(face.shape()) + " expected [" +
                             std::to_string(cfg.face_dim) + "]");
    }
    if (pose.shape() != Shape{cfg.pose_dim}) {
        throw DimensionError("combiner/fuse: pose latent " + shape_str(pose.shape()) + " expected [" +
                             std::to_string(cfg.pose_dim) + "]");
    }
    ad::Var matrix = fuse(face, pose, self.geometry_.rows, self.geometry_.cols);
    ad::Var tokens = ad::patchify(matrix, cfg.patch);
    ad::Var pooled = encode_tokens_impl(self, tape, tokens, options);
    ad::Var y = ad::matmul(ad::reshape(pooled, {1, cfg.model_dim}), tape.parameter(self.head_w_));
    y = ad::add_bias(ad::reshape(y, {cfg.face_dim}), tape.parameter(self.head_b_));
    if (cfg.face_skip) y = ad::add(y, face);
    y = ad::affine(y, tape.parameter(self.norm_scale_), tape.parameter(self.norm_shift_));
    return {ad::l2_normalize(y), pooled};
}

ForwardResult Combiner::forward(ad::Tape& tape, ad::Var face, ad::Var pose, const ForwardOptions& options) {
    return forward_impl(*this, tape, face, pose, options);
}

ForwardResult Combiner::forward(ad::Tape& tape, ad::Var face, ad::Var pose, const ForwardOptions& options) const {
    return forward_impl(*this, tape, face, pose, options);
}

Tensor Combiner::forward(const Tensor& face, const Tensor& pose) const {
    ad::Tape tape(ad::GradMode::kDisabled);
    return forward(tape, tape.input(face), tape.input(pose), ForwardOptions{}).output.value();
}

ad::Var Combiner::encode_tokens(ad::Tape& tape, ad::Var tokens, const ForwardOptions& options) const {
    return encode_tokens_impl(*this, tape, tokens, options);
}

}  // namespace fra::combiner
