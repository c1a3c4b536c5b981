#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "fra/dataset.hpp"
#include "fra/evaluator.hpp"
#include "fra/model.hpp"
#include "fra/training.hpp"

namespace fra::config {

struct DataConfig {
    /// Empty paths select the synthetic generator.
    std::string embeddings;
    std::string landmarks;
    std::string factors;
    data::SyntheticParams synthetic;

    bool synthetic_source() const noexcept { return embeddings.empty() && landmarks.empty(); }
};

struct SplitConfig {
    /// Empty: proportional to 99/11/30.
    std::array<std::size_t, 3> counts{0, 0, 0};
    bool proportional() const noexcept { return counts[0] + counts[1] + counts[2] == 0; }
};

struct GradcheckConfig {
    std::size_t coordinates = 64;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Lower bound on the relative-error denominator. The loss sits near
    /// 3 x margin, so central differences resolve gradients only to ~1e-9.
    double floor = 1e-5;
    std::size_t batch = 2;
    bool dropout = false;
};

struct RunConfig {
    std::string profile;  ///< "", "magface", "arcface" or "cosface"
    DataConfig data;
    ModelConfig model;
    train::TrainConfig optim;
    /// When nonzero, overrides optim.steps with epochs over the training records.
    std::size_t epochs = 0;
    /// Full-batch autoencoder steps run before joint training.
    std::size_t pretrain_steps = 0;
    SplitConfig split;
    eval::EvalConfig eval;
    GradcheckConfig gradcheck;
    std::uint64_t seed = 0;
    std::string out = "out";

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
    /// Propagates the top-level seed to every component.
    void apply_seed(std::uint64_t seed);
};

/// Epoch counts and dropout of the reference profiles.
void apply_profile(RunConfig& cfg, const std::string& name);

/// Unknown keys and wrongly typed values are ConfigErrors naming the field.
RunConfig from_json(const std::string& text);
RunConfig load_file(const std::string& path);
std::string to_json(const RunConfig& cfg);

}  // namespace fra::config
