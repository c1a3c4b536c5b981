#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fra/autoencoder.hpp"
#include "fra/combiner.hpp"
#include "fra/dataset.hpp"

namespace fra {

struct ModelConfig {
    pose::AutoencoderConfig autoencoder;
    combiner::CombinerConfig combiner;
    /// Chebyshev stamp radius used when rasterizing landmarks.
    int raster_radius = 1;

    void validate() const;
};

/// Pose autoencoder and combiner trained jointly.
struct FraModel {
    FraModel() = default;
    FraModel(const ModelConfig& config, std::uint64_t seed);

    ModelConfig config;
    pose::Autoencoder autoencoder;
    combiner::Combiner combiner;

    std::vector<ad::NamedParam> parameters();
    std::vector<ConstNamedParam> parameters() const;

    /// Unit-norm embedding for `face` moved to the posture shown in `pose_image`.
    std::vector<double> augment(std::span<const double> face, const raster::BinaryImage& pose_image) const;
};

/// Rasterized landmark images of a dataset, built on first use.
class ImageCache {
public:
    ImageCache(const data::Dataset& dataset, std::size_t image_size, int radius)
        : dataset_(&dataset), size_(image_size), radius_(radius) {}

    const raster::BinaryImage& image(const data::SampleKey& key);
    const Tensor& tensor(const data::SampleKey& key);

private:
    struct Entry {
        raster::BinaryImage image;
        Tensor tensor;
    };
    const Entry& entry(const data::SampleKey& key);

    const data::Dataset* dataset_;
    std::size_t size_;
    int radius_;
    std::map<data::SampleKey, Entry> entries_;
};

}  // namespace fra
