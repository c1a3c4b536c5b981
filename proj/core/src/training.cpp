#include "fra/training.hpp"

#include <cmath>
#include <sstream>

#include "fra/error.hpp"
#include "fra/ops.hpp"
#include "fra/rng.hpp"

namespace fra::train {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("optim.lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must be in [0, 1)");
    if (batch_size == 0) throw ConfigError("optim.batch_size must be at least 1");
    if (!(margin >= 0.0)) throw ConfigError("loss.margin must be >= 0");
    if (val_every > 0 && val_batch == 0) throw ConfigError("optim.val_batch must be at least 1");
}

void Sgd::step(const std::vector<ad::NamedParam>& params) {
    for (const auto& p : params) {
        Tensor& t = *p.tensor;
        if (!t.requires_grad() || !t.has_grad()) continue;
        auto g = t.grad();
        auto w = t.values();
        if (momentum_ > 0.0) {
            auto& v = velocity_[p.name];
            if (v.size() != g.size()) v.assign(g.size(), 0.0);
            for (std::size_t k = 0; k < g.size(); ++k) {
                v[k] = momentum_ * v[k] + g[k];
                w[k] -= lr_ * v[k];
            }
        } else {
            for (std::size_t k = 0; k < g.size(); ++k) w[k] -= lr_ * g[k];
        }
        t.zero_grad();
    }
}

namespace {

template <class Model>
objective::LossVars batch_loss_impl(ad::Tape& tape, Model& model, const data::Dataset& dataset, ImageCache& images,
                                    const data::Batch& batch, double margin, bool train, std::uint64_t dropout_seed) {
    if (batch.items.empty()) throw ContractError("batch_loss: empty batch");
    std::vector<objective::TripletVars> triplets;
    std::vector<objective::ReconstructionVars> recons;
    const auto embedding = [&](const data::SampleKey& k) {
        return tape.input(Tensor::vector(dataset.at(k).embedding));
    };
    combiner::ForwardOptions opts;
    opts.train = train;
    opts.dropout_seed = dropout_seed;
    for (const auto& item : batch.items) {
        const Tensor& img = images.tensor(item.positive);
        const ad::Var image = tape.input(img);
        const ad::Var latent = model.autoencoder.encode(tape, image);
        const ad::Var recon = model.autoencoder.decode(tape, latent);
        const ad::Var out = model.combiner.forward(tape, embedding(item.base), latent, opts).output;
        triplets.push_back({out, embedding(item.positive), embedding(item.negatives.pose),
                            embedding(item.negatives.identity), embedding(item.negatives.emotion)});
        recons.push_back({recon, img});
    }
    return objective::total_loss(tape, triplets, recons, margin);
}

std::string describe(std::size_t step, const objective::LossBreakdown& b) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << ": bce=" << b.bce << " triplet_pose=" << b.triplet_pose
       << " triplet_identity=" << b.triplet_identity << " triplet_emotion=" << b.triplet_emotion
       << " total=" << b.total;
    return os.str();
}

}  // namespace

objective::LossVars batch_loss(ad::Tape& tape, FraModel& model, const data::Dataset& dataset, ImageCache& images,
                               const data::Batch& batch, double margin, bool train, std::uint64_t dropout_seed) {
    return batch_loss_impl(tape, model, dataset, images, batch, margin, train, dropout_seed);
}

objective::LossVars batch_loss(ad::Tape& tape, const FraModel& model, const data::Dataset& dataset,
                               ImageCache& images, const data::Batch& batch, double margin) {
    return batch_loss_impl(tape, model, dataset, images, batch, margin, false, 0);
}

Trainer::Trainer(FraModel& model, const data::Dataset& dataset, const data::SplitSpec& split, TrainConfig config)
    : model_(model),
      dataset_(dataset),
      train_pool_(dataset.subset(split.train)),
      val_pool_(dataset.subset(split.val)),
      config_(config),
      sgd_(config.learning_rate, config.momentum),
      images_(dataset, model.config.autoencoder.image_size, model.config.raster_radius) {
    config_.validate();
    if (train_pool_.empty()) throw ConfigError("training split has no records");
    if (train_pool_.identities().size() < 2) {
        throw ConfigError("training split needs at least two identities to draw identity negatives");
    }
    if (config_.val_every > 0 && val_pool_.identities().size() == 1) {
        throw ConfigError("validation split needs at least two identities to draw identity negatives "
                          "(or set optim.val_every to 0)");
    }
}

data::Batch Trainer::training_batch(std::size_t step) const {
    return data::make_batch(train_pool_, config_.batch_size, derive_seed(config_.seed, 0xb000 + step));
}

StepRecord Trainer::step() {
    StepRecord rec;
    rec.step = step_;
    const data::Batch batch = training_batch(step_);
    rec.skipped = batch.skipped;
    if (batch.items.empty()) throw ComputeError("no trainable items in batch at step " + std::to_string(step_));
    auto params = model_.parameters();
    zero_grads(params);
    {
        ad::Tape tape;
        const auto loss = batch_loss(tape, model_, dataset_, images_, batch, config_.margin, true,
                                     derive_seed(config_.seed, 0xd000 + step_));
        rec.loss = loss.values();
        if (!std::isfinite(rec.loss.total)) throw ComputeError(describe(step_, rec.loss));
        tape.backward(loss.total);
    }
    sgd_.step(params);
    ++step_;
    if (config_.val_every > 0 && has_validation() && step_ % config_.val_every == 0) rec.val_total = validation_loss();
    return rec;
}

objective::LossBreakdown Trainer::evaluate_step_batch(std::size_t step) {
    const data::Batch batch = training_batch(step);
    ad::Tape tape(ad::GradMode::kDisabled);
    const FraModel& m = model_;
    return batch_loss(tape, m, dataset_, images_, batch, config_.margin).values();
}

double Trainer::validation_loss() {
    if (!has_validation()) throw ContractError("validation split is empty");
    const data::Batch batch = data::make_batch(val_pool_, config_.val_batch, derive_seed(config_.seed, 0x7a1));
    if (batch.items.empty()) throw ComputeError("validation split yields no usable items");
    ad::Tape tape(ad::GradMode::kDisabled);
    const FraModel& m = model_;
    return batch_loss(tape, m, dataset_, images_, batch, config_.margin).values().total;
}

std::vector<double> pretrain_autoencoder(pose::Autoencoder& ae, const std::vector<Tensor>& images, std::size_t steps,
                                         double learning_rate, double momentum) {
    if (images.empty()) throw ConfigError("pretrain: no images");
    Sgd sgd(learning_rate, momentum);
    auto params = ae.parameters();
    std::vector<double> history;
    history.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        zero_grads(params);
        ad::Tape tape;
        std::vector<ad::Var> terms;
        terms.reserve(images.size());
        for (const Tensor& img : images) {
            const ad::Var recon = ae.decode(tape, ae.encode(tape, tape.input(img)));
            terms.push_back(ad::reshape(ad::bce_mean(recon, img), {1}));
        }
        const ad::Var loss = ad::mean(ad::concat(std::span<const ad::Var>(terms), 0));
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw ComputeError("non-finite reconstruction loss at step " + std::to_string(s));
        history.push_back(value);
        tape.backward(loss);
        sgd.step(params);
    }
    return history;
}

}  // namespace fra::train
