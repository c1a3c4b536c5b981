#include "fra/objective.hpp"

#include <algorithm>
#include <cmath>

#include "fra/autoencoder.hpp"
#include "fra/error.hpp"
#include "fra/ops.hpp"
#include "fra/rng.hpp"

namespace fra::objective {
namespace {

constexpr double kNormTolerance = 1e-3;

void check_unit(std::span<const double> v, const char* what) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double norm = std::sqrt(ss);
    if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
        throw ContractError(std::string("squared_distance: ") + what + " has norm " + std::to_string(norm) +
                            ", expected a unit vector");
    }
}

void check_margin(double margin) {
    if (!(margin >= 0.0)) throw ConfigError("triplet margin must be >= 0, got " + std::to_string(margin));
}

std::size_t pick(std::uint64_t seed, std::uint64_t stream, std::size_t n) {
    return std::min(static_cast<std::size_t>(counter_uniform(seed, stream, 0) * static_cast<double>(n)), n - 1);
}

}  // namespace

double squared_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("squared_distance: lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()));
    }
    check_unit(x, "x");
    check_unit(y, "y");
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d += (x[k] - y[k]) * (x[k] - y[k]);
    return d;
}

ad::Var squared_distance(ad::Var x, ad::Var y) {
    check_unit(x.value().values(), "x");
    check_unit(y.value().values(), "y");
    const ad::Var diff = ad::sub(x, y);
    return ad::sum(ad::mul(diff, diff));
}

double triplet_term(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double margin) {
    check_margin(margin);
    return std::max(squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin, 0.0);
}

double triplet_term(std::span<const std::vector<double>> anchors, std::span<const std::vector<double>> positives,
                    std::span<const std::vector<double>> negatives, double margin) {
    check_margin(margin);
    if (anchors.empty() || anchors.size() != positives.size() || anchors.size() != negatives.size()) {
        throw ContractError("triplet_term: anchors, positives and negatives must be equal-length and nonempty");
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < anchors.size(); ++n) acc += triplet_term(anchors[n], positives[n], negatives[n], margin);
    return acc / static_cast<double>(anchors.size());
}

ad::Var triplet_term(std::span<const ad::Var> anchors, std::span<const ad::Var> positives,
                     std::span<const ad::Var> negatives, double margin) {
    check_margin(margin);
    if (anchors.empty() || anchors.size() != positives.size() || anchors.size() != negatives.size()) {
        throw ContractError("triplet_term: anchors, positives and negatives must be equal-length and nonempty");
    }
    std::vector<ad::Var> hinges;
    hinges.reserve(anchors.size());
    for (std::size_t n = 0; n < anchors.size(); ++n) {
        const ad::Var gap = ad::sub(squared_distance(anchors[n], positives[n]), squared_distance(anchors[n], negatives[n]));
        hinges.push_back(ad::reshape(ad::relu(ad::add_scalar(gap, margin)), {1}));
    }
    return ad::mean(ad::concat(std::span<const ad::Var>(hinges), 0));
}

LossBreakdown total_loss(std::span<const TripletItem> batch, std::span<const ReconstructionPair> reconstructions,
                         double margin) {
    if (batch.empty()) throw ContractError("total_loss: empty batch");
    check_margin(margin);
    LossBreakdown out;
    for (const auto& r : reconstructions) out.bce += pose::bce_loss(r.reconstruction, r.target);
    if (!reconstructions.empty()) out.bce /= static_cast<double>(reconstructions.size());
    for (const auto& it : batch) {
        out.triplet_pose += triplet_term(it.anchor, it.positive, it.neg_pose, margin);
        out.triplet_identity += triplet_term(it.anchor, it.positive, it.neg_identity, margin);
        out.triplet_emotion += triplet_term(it.anchor, it.positive, it.neg_emotion, margin);
    }
    const auto n = static_cast<double>(batch.size());
    out.triplet_pose /= n;
    out.triplet_identity /= n;
    out.triplet_emotion /= n;
    out.total = out.bce + out.triplet_pose + out.triplet_identity + out.triplet_emotion;
    return out;
}

LossBreakdown LossVars::values() const {
    LossBreakdown b;
    b.bce = bce.valid() ? bce.value().item() : 0.0;
    b.triplet_pose = triplet_pose.value().item();
    b.triplet_identity = triplet_identity.value().item();
    b.triplet_emotion = triplet_emotion.value().item();
    b.total = total.value().item();
    return b;
}

LossVars total_loss(ad::Tape& tape, std::span<const TripletVars> batch,
                    std::span<const ReconstructionVars> reconstructions, double margin) {
    if (batch.empty()) throw ContractError("total_loss: empty batch");
    std::vector<ad::Var> a, p, np, ni, ne;
    for (const auto& it : batch) {
        a.push_back(it.anchor);
        p.push_back(it.positive);
        np.push_back(it.neg_pose);
        ni.push_back(it.neg_identity);
        ne.push_back(it.neg_emotion);
    }
    LossVars out;
    out.triplet_pose = triplet_term(a, p, np, margin);
    out.triplet_identity = triplet_term(a, p, ni, margin);
    out.triplet_emotion = triplet_term(a, p, ne, margin);
    ad::Var total = ad::add(ad::add(out.triplet_pose, out.triplet_identity), out.triplet_emotion);
    if (!reconstructions.empty()) {
        std::vector<ad::Var> terms;
        for (const auto& r : reconstructions) terms.push_back(ad::reshape(ad::bce_mean(r.reconstruction, r.target), {1}));
        out.bce = ad::mean(ad::concat(std::span<const ad::Var>(terms), 0));
        total = ad::add(out.bce, total);
    }
    (void)tape;
    out.total = total;
    return out;
}

data::NegativeKeys sample_negatives(const data::Dataset& dataset, const data::SampleKey& anchor_key,
                                    const std::string& target_pose, std::uint64_t seed) {
    std::vector<data::SampleKey> pose_c, emotion_c, identity_c;
    for (const auto& [k, _] : dataset.records()) {
        if (k.identity != anchor_key.identity) {
            identity_c.push_back(k);
        } else if (k.emotion == anchor_key.emotion) {
            if (k.pose != target_pose) pose_c.push_back(k);
        } else if (k.pose == target_pose) {
            emotion_c.push_back(k);
        }
    }
    const auto fail = [&](const char* category) {
        throw SamplingError(std::string("no eligible ") + category + " negative for anchor " + anchor_key.str() +
                            " with target pose " + target_pose);
    };
    if (pose_c.empty()) fail("pose");
    if (identity_c.empty()) fail("identity");
    if (emotion_c.empty()) fail("emotion");
    return {pose_c[pick(seed, 1, pose_c.size())], identity_c[pick(seed, 2, identity_c.size())],
            emotion_c[pick(seed, 3, emotion_c.size())]};
}

}  // namespace fra::objective
