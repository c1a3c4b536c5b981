#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fra/autodiff.hpp"
#include "fra/dataset.hpp"
#include "fra/landmarks.hpp"

namespace fra::objective {

inline constexpr double kDefaultMargin = 10.0;

/// ||x - y||^2 of unit vectors. Throws ContractError when either norm is off
/// by more than 1e-3 (a missing normalization upstream).
double squared_distance(std::span<const double> x, std::span<const double> y);
ad::Var squared_distance(ad::Var x, ad::Var y);

struct TripletItem {
    std::vector<double> anchor;  ///< generated embedding
    std::vector<double> positive;
    std::vector<double> neg_pose;
    std::vector<double> neg_identity;
    std::vector<double> neg_emotion;
};

/// Tape-side counterpart of TripletItem.
struct TripletVars {
    ad::Var anchor;
    ad::Var positive;
    ad::Var neg_pose;
    ad::Var neg_identity;
    ad::Var neg_emotion;
};

struct ReconstructionPair {
    Tensor reconstruction;  ///< [1 x H x W] in (0, 1)
    raster::BinaryImage target;
};

struct ReconstructionVars {
    ad::Var reconstruction;
    Tensor target;  ///< [1 x H x W] of 0/1
};

struct LossBreakdown {
    double bce = 0.0;
    double triplet_pose = 0.0;
    double triplet_identity = 0.0;
    double triplet_emotion = 0.0;
    double total = 0.0;

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// mean_n max(d(a_n, p_n) - d(a_n, q_n) + margin, 0). Throws ConfigError on a
/// negative margin.
double triplet_term(std::span<const std::vector<double>> anchors, std::span<const std::vector<double>> positives,
                    std::span<const std::vector<double>> negatives, double margin);
double triplet_term(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double margin);
ad::Var triplet_term(std::span<const ad::Var> anchors, std::span<const ad::Var> positives,
                     std::span<const ad::Var> negatives, double margin);

/// BCE over the reconstructions (pixel and batch averaged) plus the three
/// triplet terms, unweighted. Throws ContractError on an empty batch.
LossBreakdown total_loss(std::span<const TripletItem> batch, std::span<const ReconstructionPair> reconstructions,
                         double margin = kDefaultMargin);

struct LossVars {
    ad::Var bce;  ///< invalid when there are no reconstructions
    ad::Var triplet_pose;
    ad::Var triplet_identity;
    ad::Var triplet_emotion;
    ad::Var total;

    LossBreakdown values() const;
};

LossVars total_loss(ad::Tape& tape, std::span<const TripletVars> batch,
                    std::span<const ReconstructionVars> reconstructions, double margin = kDefaultMargin);

/// neg_pose (i, e, p' != target_pose), neg_emotion (i, e' != e, target_pose),
/// neg_identity any record with identity != i; each uniform over eligible
/// keys. Throws SamplingError naming the category and the anchor key.
data::NegativeKeys sample_negatives(const data::Dataset& dataset, const data::SampleKey& anchor_key,
                                    const std::string& target_pose, std::uint64_t seed);

}  // namespace fra::objective
