#include "fra/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fra/error.hpp"
#include "fra/ops.hpp"

namespace fra::pose {
namespace {

constexpr std::size_t kKernel = 4;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPadding = 1;

}  // namespace

void AutoencoderConfig::validate() const {
    if (channels.empty()) throw ConfigError("autoencoder: at least one encoder stage is required");
    if (latent_dim == 0) throw ConfigError("autoencoder: latent_dim must be positive");
    if (image_size < 8) throw ConfigError("autoencoder: image_size must be at least 8");
    const std::size_t factor = std::size_t{1} << channels.size();
    if (image_size % factor != 0) {
        throw ConfigError("autoencoder: image_size " + std::to_string(image_size) + " is not divisible by 2^" +
                          std::to_string(channels.size()) + " encoder stages");
    }
    for (std::size_t c : channels) {
        if (c == 0) throw ConfigError("autoencoder: channel counts must be positive");
    }
}

std::size_t AutoencoderConfig::bottleneck_extent() const noexcept { return image_size >> channels.size(); }

std::size_t AutoencoderConfig::flat_features() const noexcept {
    const std::size_t e = bottleneck_extent();
    return channels.back() * e * e;
}

Autoencoder::Autoencoder(AutoencoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t stages = config_.channels.size();
    std::size_t in_ch = 1;
    for (std::size_t s = 0; s < stages; ++s) {
        const std::size_t out_ch = config_.channels[s];
        const double fan_in = static_cast<double>(in_ch * kKernel * kKernel);
        enc_kernels_.push_back(uniform_param({out_ch, in_ch, kKernel, kKernel}, std::sqrt(6.0 / fan_in), rng));
        // Nonzero biases keep empty image regions off the ReLU kink.
        enc_biases_.push_back(uniform_param({out_ch}, 1.0 / std::sqrt(fan_in), rng));
        in_ch = out_ch;
    }
    const std::size_t flat = config_.flat_features();
    enc_proj_w_ = uniform_param({flat, config_.latent_dim}, std::sqrt(3.0 / static_cast<double>(flat)), rng);
    enc_proj_b_ = constant_param({config_.latent_dim}, 0.0);
    dec_proj_w_ =
        uniform_param({config_.latent_dim, flat}, std::sqrt(6.0 / static_cast<double>(config_.latent_dim)), rng);
    dec_proj_b_ = uniform_param({flat}, 1.0 / std::sqrt(static_cast<double>(config_.latent_dim)), rng);
    for (std::size_t s = stages; s-- > 0;) {
        const std::size_t cin = config_.channels[s];
        const std::size_t cout = s == 0 ? 1 : config_.channels[s - 1];
        // Each output pixel of a stride-2 transposed conv sees (k/2)^2 taps per input channel.
        const double fan_in = static_cast<double>(cin * (kKernel / kStride) * (kKernel / kStride));
        const double gain = s == 0 ? 3.0 : 6.0;
        dec_kernels_.push_back(uniform_param({cin, cout, kKernel, kKernel}, std::sqrt(gain / fan_in), rng));
        dec_biases_.push_back(uniform_param({cout}, 1.0 / std::sqrt(fan_in), rng));
    }
}

Autoencoder Autoencoder::zeros(AutoencoderConfig config) {
    Autoencoder ae(std::move(config), 0);
    for (auto& p : ae.parameters()) std::fill(p.tensor->values().begin(), p.tensor->values().end(), 0.0);
    return ae;
}

template <class Self, class F>
void Autoencoder::visit(Self& self, F&& f) {
    for (std::size_t s = 0; s < self.enc_kernels_.size(); ++s) {
        f("ae.enc.conv" + std::to_string(s) + ".w", self.enc_kernels_[s]);
        f("ae.enc.conv" + std::to_string(s) + ".b", self.enc_biases_[s]);
    }
    f(std::string("ae.enc.proj.w"), self.enc_proj_w_);
    f(std::string("ae.enc.proj.b"), self.enc_proj_b_);
    f(std::string("ae.dec.proj.w"), self.dec_proj_w_);
    f(std::string("ae.dec.proj.b"), self.dec_proj_b_);
    for (std::size_t s = 0; s < self.dec_kernels_.size(); ++s) {
        f("ae.dec.tconv" + std::to_string(s) + ".w", self.dec_kernels_[s]);
        f("ae.dec.tconv" + std::to_string(s) + ".b", self.dec_biases_[s]);
    }
}

std::vector<ad::NamedParam> Autoencoder::parameters() {
    std::vector<ad::NamedParam> out;
    visit(*this, [&](std::string name, Tensor& t) { out.push_back({std::move(name), &t}); });
    return out;
}

std::vector<ConstNamedParam> Autoencoder::parameters() const {
    std::vector<ConstNamedParam> out;
    visit(*this, [&](std::string name, const Tensor& t) { out.push_back({std::move(name), &t}); });
    return out;
}

template <class Self>
ad::Var Autoencoder::encode_impl(Self& self, ad::Tape& tape, ad::Var image) {
    const auto& cfg = self.config_;
    const Shape expected{1, cfg.image_size, cfg.image_size};
    if (image.shape() != expected) {
        throw ConfigError("encode: image " + shape_str(image.shape()) + " does not match configured " +
                          shape_str(expected));
    }
    ad::Var h = image;
    for (std::size_t s = 0; s < self.enc_kernels_.size(); ++s) {
        h = ad::conv2d(h, tape.parameter(self.enc_kernels_[s]), tape.parameter(self.enc_biases_[s]),
                       {kStride, kPadding});
        h = ad::relu(h);
    }
    h = ad::reshape(h, {1, cfg.flat_features()});
    h = ad::matmul(h, tape.parameter(self.enc_proj_w_));
    h = ad::reshape(h, {cfg.latent_dim});
    return ad::add_bias(h, tape.parameter(self.enc_proj_b_));
}

template <class Self>
ad::Var Autoencoder::decode_impl(Self& self, ad::Tape& tape, ad::Var latent) {
    const auto& cfg = self.config_;
    if (latent.shape() != Shape{cfg.latent_dim}) {
        throw ConfigError("decode: latent " + shape_str(latent.shape()) + " does not match latent_dim " +
                          std::to_string(cfg.latent_dim));
    }
    ad::Var h = ad::matmul(ad::reshape(latent, {1, cfg.latent_dim}), tape.parameter(self.dec_proj_w_));
    h = ad::reshape(h, {cfg.flat_features()});
    h = ad::relu(ad::add_bias(h, tape.parameter(self.dec_proj_b_)));
    const std::size_t e = cfg.bottleneck_extent();
    h = ad::reshape(h, {cfg.channels.back(), e, e});
    for (std::size_t s = 0; s < self.dec_kernels_.size(); ++s) {
        h = ad::conv_transpose2d(h, tape.parameter(self.dec_kernels_[s]), tape.parameter(self.dec_biases_[s]),
                                 {kStride, kPadding, 0});
        if (s + 1 < self.dec_kernels_.size()) h = ad::relu(h);
    }
    return ad::sigmoid(h);
}

ad::Var Autoencoder::encode(ad::Tape& tape, ad::Var image) { return encode_impl(*this, tape, image); }
ad::Var Autoencoder::encode(ad::Tape& tape, ad::Var image) const { return encode_impl(*this, tape, image); }
ad::Var Autoencoder::decode(ad::Tape& tape, ad::Var latent) { return decode_impl(*this, tape, latent); }
ad::Var Autoencoder::decode(ad::Tape& tape, ad::Var latent) const { return decode_impl(*this, tape, latent); }

Tensor Autoencoder::encode(const raster::BinaryImage& image) const {
    if (image.height() != config_.image_size || image.width() != config_.image_size) {
        throw ConfigError("encode: image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          " does not match configured size " + std::to_string(config_.image_size));
    }
    ad::Tape tape(ad::GradMode::kDisabled);
    return encode(tape, tape.input(image.to_tensor())).value();
}

Tensor Autoencoder::decode(const Tensor& latent) const {
    ad::Tape tape(ad::GradMode::kDisabled);
    return decode(tape, tape.input(latent)).value();
}

double bce_loss(const Tensor& reconstruction, const raster::BinaryImage& target, double eps) {
    ad::Tape tape(ad::GradMode::kDisabled);
    return ad::bce_mean(tape.input(reconstruction), target.to_tensor(), eps).value().item();
}

}  // namespace fra::pose
