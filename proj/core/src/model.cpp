#include "fra/model.hpp"

#include "fra/error.hpp"
#include "fra/rng.hpp"

namespace fra {

void ModelConfig::validate() const {
    autoencoder.validate();
    combiner.validate();
    if (raster_radius < 0) throw ConfigError("image.radius must be >= 0");
    if (combiner.pose_dim != autoencoder.latent_dim) {
        throw ConfigError("model.pose_dim (" + std::to_string(combiner.pose_dim) + ") must equal the autoencoder latent_dim (" +
                          std::to_string(autoencoder.latent_dim) + ")");
    }
}

FraModel::FraModel(const ModelConfig& cfg, std::uint64_t seed)
    : config(cfg),
      autoencoder(cfg.autoencoder, derive_seed(seed, 0xae)),
      combiner(cfg.combiner, derive_seed(seed, 0xc0)) {
    cfg.validate();
}

std::vector<ad::NamedParam> FraModel::parameters() {
    auto out = autoencoder.parameters();
    auto c = combiner.parameters();
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

std::vector<ConstNamedParam> FraModel::parameters() const {
    auto out = autoencoder.parameters();
    auto c = combiner.parameters();
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

std::vector<double> FraModel::augment(std::span<const double> face, const raster::BinaryImage& pose_image) const {
    if (face.size() != config.combiner.face_dim) {
        throw ConfigError("augment: face embedding has length " + std::to_string(face.size()) + ", model expects " +
                          std::to_string(config.combiner.face_dim));
    }
    const Tensor latent = autoencoder.encode(pose_image);
    const Tensor out = combiner.forward(Tensor({face.size()}, std::vector<double>(face.begin(), face.end())), latent);
    const auto v = out.values();
    return {v.begin(), v.end()};
}

const ImageCache::Entry& ImageCache::entry(const data::SampleKey& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        auto img = raster::rasterize(dataset_->at(key).landmarks, size_, size_, radius_);
        Tensor t = img.to_tensor();
        it = entries_.emplace(key, Entry{std::move(img), std::move(t)}).first;
    }
    return it->second;
}

const raster::BinaryImage& ImageCache::image(const data::SampleKey& key) { return entry(key).image; }
const Tensor& ImageCache::tensor(const data::SampleKey& key) { return entry(key).tensor; }

}  // namespace fra
