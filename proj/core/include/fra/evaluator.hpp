#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fra/dataset.hpp"
#include "fra/model.hpp"
#include "fra/probe.hpp"

namespace fra::eval {

struct EvalConfig {
    ProbeConfig probe;
    /// Held-out fraction of each class in the inner split.
    double holdout = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Target { kPose, kIdentity, kEmotion };
inline constexpr std::array<Target, 3> kTargets{Target::kPose, Target::kIdentity, Target::kEmotion};
std::string target_name(Target t);
const std::string& label_of(const data::SampleKey& key, Target t);

/// One augmented embedding: `base` moved to the pose of `key`.
struct Augmentation {
    data::SampleKey base;
    data::SampleKey key;
    std::vector<double> embedding;
};

/// Every sample moved to every other pose whose (identity, emotion, pose)
/// record exists, so the target landmarks are available.
std::vector<Augmentation> augment_all(const FraModel& model, const data::Dataset& samples, ImageCache& images);

/// Per-class seeded partition of item indices: each class with n >= 2 items
/// holds out max(1, round(holdout * n)); single-item classes stay in training.
struct InnerSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held;
};
InnerSplit stratified_split(const std::vector<std::string>& labels, double holdout, std::uint64_t seed);

struct TargetResult {
    Target target = Target::kPose;
    /// Experiments 1, 2, 3.
    std::array<double, 3> accuracy{};
    std::array<std::size_t, 3> train_size{};
    std::array<std::size_t, 3> eval_size{};
    /// Keys evaluated in experiments 1 and 3.
    std::vector<data::SampleKey> exp1_eval_keys;
    std::vector<data::SampleKey> exp3_eval_keys;
    /// From the experiment 3 probe on the held-out real samples.
    std::vector<std::string> classes;
    RocResult roc;
    std::vector<std::vector<std::size_t>> confusion;
};

struct EvalReport {
    std::vector<TargetResult> targets;
    std::size_t test_samples = 0;
    std::size_t augmentations = 0;
    /// Mean cosine to the factor-model target of the augmented key, for the
    /// augmented embedding and for its unmodified base (synthetic data only).
    double cosine_augmented = 0.0;
    double cosine_base = 0.0;
    bool has_oracle = false;
    std::uint64_t seed = 0;
    data::SplitSpec split;
    std::string checkpoint_id;

    const TargetResult& result(Target t) const;
};

/// Experiment 1: probe on real 80% of the test identities, scored on the held
/// 20%. Experiment 2: probe trained and scored within the augmented set
/// (80/20). Experiment 3: real 80% plus the augmentations of those samples,
/// scored on the same held 20% as experiment 1.
EvalReport run_protocol(const data::Dataset& dataset, const data::SplitSpec& split, const FraModel& model,
                        const EvalConfig& config, const std::string& checkpoint_id);

std::string report_json(const EvalReport& report);
std::string roc_csv(const RocCurve& curve);
std::string confusion_csv(const std::vector<std::string>& classes,
                          const std::vector<std::vector<std::size_t>>& counts);

struct ReportFiles {
    std::filesystem::path json;
    std::vector<std::filesystem::path> roc;
    std::vector<std::filesystem::path> confusion;
};
/// report.json, roc_<target>.csv and confusion_<target>.csv under dir; every
/// CSV is read back and checked against its header.
ReportFiles write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace fra::eval
