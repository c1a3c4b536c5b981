#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fra/checkpoint.hpp"
#include "fra/config.hpp"
#include "fra/evaluator.hpp"
#include "fra/gradcheck.hpp"
#include "fra/training.hpp"

// Command implementations shared by the command-line tool and the tests.
namespace fra::app {

data::Dataset load_dataset(const config::RunConfig& cfg);
data::SplitSpec make_split(const data::Dataset& dataset, const config::RunConfig& cfg);

data::DatasetFiles run_synth(const config::RunConfig& cfg);

struct TrainOptions {
    std::string resume;  ///< checkpoint to continue from
    /// Stop after this many steps in this invocation (0: run to the configured total).
    std::size_t max_steps = 0;
    std::ostream* log = nullptr;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::filesystem::path loss_csv;
    std::filesystem::path loss_svg;
    std::vector<train::StepRecord> steps;  ///< this invocation only
    std::size_t total_steps = 0;
    std::optional<double> best_val;
};

TrainResult run_train(const config::RunConfig& cfg, const TrainOptions& options);

/// Full-batch autoencoder training on the training identities' images.
/// Writes autoencoder.ckpt and pretrain_bce.csv.
std::vector<double> run_pretrain(const config::RunConfig& cfg, std::ostream* log);

struct AugmentRequest {
    std::string checkpoint;
    std::vector<std::string> poses;  ///< empty: every known pose
    bool test_only = false;          ///< only samples of the checkpoint's test identities
};
/// Writes augmented.csv; returns its path.
std::filesystem::path run_augment(const config::RunConfig& cfg, const AugmentRequest& request);

struct EvalOutputs {
    eval::EvalReport report;
    eval::ReportFiles files;
    std::vector<std::filesystem::path> plots;
};
EvalOutputs run_eval(const config::RunConfig& cfg, const std::string& checkpoint);

/// Finite-difference check of the full training loss at a seeded random init.
/// Refuses (ConfigError) when dropout is requested.
ad::CheckReport run_gradcheck(const config::RunConfig& cfg);

/// Model rebuilt from a checkpoint's own config snapshot.
FraModel model_from_checkpoint(const ckpt::Checkpoint& c);
data::SplitSpec split_from_checkpoint(const ckpt::Checkpoint& c);

}  // namespace fra::app
