#pragma once

// Reduced geometry that keeps unit tests fast.

#include "fra/dataset.hpp"
#include "fra/model.hpp"

namespace testing_support {

inline fra::ModelConfig small_model_config(std::size_t dim = 32) {
    fra::ModelConfig c;
    c.autoencoder.image_size = 32;
    c.autoencoder.latent_dim = dim;
    c.autoencoder.channels = {4, 8};
    c.combiner.face_dim = dim;
    c.combiner.pose_dim = dim;
    c.combiner.patch = 4;
    c.combiner.model_dim = 16;
    c.combiner.ff_dim = 16;
    c.combiner.heads = 2;
    c.combiner.layers = 2;
    return c;
}

inline fra::data::SyntheticParams small_data(std::size_t dim = 32, std::uint64_t seed = 1) {
    fra::data::SyntheticParams p;
    p.identities = 10;
    p.emotions = 3;
    p.poses = 3;
    p.dim = dim;
    p.seed = seed;
    return p;
}

}  // namespace testing_support
