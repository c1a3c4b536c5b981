#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fra/dataset.hpp"
#include "fra/model.hpp"
#include "fra/objective.hpp"

namespace fra::train {

struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.0;
    std::size_t steps = 200;
    std::size_t batch_size = 16;
    double margin = objective::kDefaultMargin;
    /// Validation loss every this many steps (0 disables).
    std::size_t val_every = 20;
    std::size_t val_batch = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Stochastic gradient descent with optional heavy-ball momentum:
/// v <- mu v + g, theta <- theta - lr v.
class Sgd {
public:
    Sgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

    /// Applies and then clears the accumulated gradients.
    void step(const std::vector<ad::NamedParam>& params);

    std::map<std::string, std::vector<double>>& velocity() noexcept { return velocity_; }
    const std::map<std::string, std::vector<double>>& velocity() const noexcept { return velocity_; }

private:
    double lr_;
    double momentum_;
    std::map<std::string, std::vector<double>> velocity_;
};

/// Records the full multi-task loss of a batch on `tape`. With train set,
/// dropout draws are keyed by dropout_seed.
objective::LossVars batch_loss(ad::Tape& tape, FraModel& model, const data::Dataset& dataset, ImageCache& images,
                               const data::Batch& batch, double margin, bool train, std::uint64_t dropout_seed);
objective::LossVars batch_loss(ad::Tape& tape, const FraModel& model, const data::Dataset& dataset,
                               ImageCache& images, const data::Batch& batch, double margin);

struct StepRecord {
    std::size_t step = 0;
    objective::LossBreakdown loss;
    std::optional<double> val_total;
    std::size_t skipped = 0;
};

class Trainer {
public:
    Trainer(FraModel& model, const data::Dataset& dataset, const data::SplitSpec& split, TrainConfig config);

    /// One optimizer step on a fresh training batch. Throws ComputeError on a
    /// non-finite loss.
    StepRecord step();
    /// Loss of the current parameters on the step's batch, without dropout or updates.
    objective::LossBreakdown evaluate_step_batch(std::size_t step);
    double validation_loss();
    bool has_validation() const noexcept { return !val_pool_.empty(); }

    std::size_t steps_done() const noexcept { return step_; }
    void set_steps_done(std::size_t step) noexcept { step_ = step; }
    Sgd& optimizer() noexcept { return sgd_; }
    const TrainConfig& config() const noexcept { return config_; }

    data::Batch training_batch(std::size_t step) const;

private:
    FraModel& model_;
    const data::Dataset& dataset_;
    data::Dataset train_pool_;
    data::Dataset val_pool_;
    TrainConfig config_;
    Sgd sgd_;
    ImageCache images_;
    std::size_t step_ = 0;
};

/// Full-batch autoencoder training on fixed images; returns the BCE before each step.
std::vector<double> pretrain_autoencoder(pose::Autoencoder& ae, const std::vector<Tensor>& images, std::size_t steps,
                                         double learning_rate, double momentum);

}  // namespace fra::train
