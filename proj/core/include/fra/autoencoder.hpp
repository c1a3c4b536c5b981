#pragma once

#include <cstdint>
#include <vector>

#include "fra/autodiff.hpp"
#include "fra/landmarks.hpp"
#include "fra/params.hpp"

namespace fra::pose {

/// Convolutional autoencoder geometry. Each encoder stage halves the image
/// (kernel 4, stride 2, padding 1); the decoder mirrors it with transposed
/// convolutions and ends in a sigmoid.
struct AutoencoderConfig {
    std::size_t image_size = 64;
    std::size_t latent_dim = 512;
    std::vector<std::size_t> channels{8, 16, 32};

    /// Throws ConfigError when the image cannot be halved once per stage.
    void validate() const;
    std::size_t bottleneck_extent() const noexcept;
    std::size_t flat_features() const noexcept;
};

/// Encoder A maps a binarized landmark image to the posture latent; decoder B
/// reconstructs the image from it.
class Autoencoder {
public:
    Autoencoder() = default;
    Autoencoder(AutoencoderConfig config, std::uint64_t seed);
    /// All weights and biases zero; used for propagation checks.
    static Autoencoder zeros(AutoencoderConfig config);

    const AutoencoderConfig& config() const noexcept { return config_; }

    /// image: [1 x H x W] -> latent [latent_dim].
    ad::Var encode(ad::Tape& tape, ad::Var image);
    ad::Var encode(ad::Tape& tape, ad::Var image) const;
    /// latent [latent_dim] -> reconstruction [1 x H x W] with values in (0, 1).
    ad::Var decode(ad::Tape& tape, ad::Var latent);
    ad::Var decode(ad::Tape& tape, ad::Var latent) const;

    Tensor encode(const raster::BinaryImage& image) const;
    Tensor decode(const Tensor& latent) const;

    std::vector<ad::NamedParam> parameters();
    std::vector<ConstNamedParam> parameters() const;

private:
    template <class Self>
    static ad::Var encode_impl(Self& self, ad::Tape& tape, ad::Var image);
    template <class Self>
    static ad::Var decode_impl(Self& self, ad::Tape& tape, ad::Var latent);
    template <class Self, class F>
    static void visit(Self& self, F&& f);

    AutoencoderConfig config_;
    std::vector<Tensor> enc_kernels_;
    std::vector<Tensor> enc_biases_;
    Tensor enc_proj_w_;
    Tensor enc_proj_b_;
    Tensor dec_proj_w_;
    Tensor dec_proj_b_;
    std::vector<Tensor> dec_kernels_;
    std::vector<Tensor> dec_biases_;
};

/// Pixel-averaged binary cross-entropy with predictions clamped to [eps, 1-eps].
double bce_loss(const Tensor& reconstruction, const raster::BinaryImage& target, double eps = 1e-7);

}  // namespace fra::pose
