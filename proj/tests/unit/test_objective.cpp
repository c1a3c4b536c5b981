#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "fra/dataset.hpp"
#include "fra/error.hpp"
#include "fra/gradcheck.hpp"
#include "fra/objective.hpp"
#include "fra/ops.hpp"
#include "support/oracles.hpp"

using namespace fra;
using namespace fra::objective;

namespace {

std::vector<double> e(std::size_t i, std::size_t n = 3, double sign = 1.0) {
    std::vector<double> v(n, 0.0);
    v[i] = sign;
    return v;
}

std::vector<double> unit(std::mt19937_64& rng, std::size_t n) {
    auto v = oracle::random_vector(n, rng);
    double s = 0.0;
    for (double x : v) s += x * x;
    for (double& x : v) x /= std::sqrt(s);
    return v;
}

}  // namespace

TEST(SquaredDistance, ExtremesAndSymmetry) {
    EXPECT_EQ(squared_distance(e(0), e(0)), 0.0);
    EXPECT_EQ(squared_distance(e(0), e(0, 3, -1.0)), 4.0);
    EXPECT_EQ(squared_distance(e(0), e(1)), 2.0);
    std::mt19937_64 rng(41);
    for (int t = 0; t < 100; ++t) {
        const auto x = unit(rng, 16), y = unit(rng, 16);
        EXPECT_EQ(squared_distance(x, y), squared_distance(y, x));
        EXPECT_EQ(squared_distance(x, x), 0.0);
        const double d = squared_distance(x, y);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 4.0);
    }
    EXPECT_THROW(squared_distance(std::vector<double>{1.1, 0, 0}, e(0)), ContractError);
}

TEST(TripletTerm, ExtremeDistancesAtDefaultMargin) {
    EXPECT_EQ(kDefaultMargin, 10.0);
    // d(a,p) in {0, 2, 4} against d(a,n) in {0, 2, 4}.
    const std::vector<double> a = e(0);
    const std::vector<std::vector<double>> at_distance{e(0), e(1), e(0, 3, -1.0)};
    const double d[] = {0.0, 2.0, 4.0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(triplet_term(a, at_distance[i], at_distance[j], 10.0), std::max(d[i] - d[j] + 10.0, 0.0), 1e-12);
    EXPECT_NEAR(triplet_term(a, a, e(0, 3, -1.0), 10.0), 6.0, 1e-12);
    EXPECT_NEAR(triplet_term(a, a, a, 10.0), 10.0, 1e-12);
    EXPECT_NEAR(triplet_term(a, a, a, 3.5), 3.5, 1e-12);
    EXPECT_THROW(triplet_term(a, a, a, -1.0), ConfigError);
}

TEST(TripletTerm, ZeroExactlyWhenGoalStateHolds) {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 200; ++t) {
        const auto a = unit(rng, 8), p = unit(rng, 8), n = unit(rng, 8);
        const double m = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        const double v = triplet_term(a, p, n, m);
        EXPECT_GE(v, 0.0);
        EXPECT_EQ(v == 0.0, squared_distance(a, n) >= squared_distance(a, p) + m);
    }
    const auto a = unit(rng, 8), n = unit(rng, 8);
    EXPECT_EQ(triplet_term(a, a, n, 0.0), 0.0);
}

TEST(TripletTerm, BatchAverages) {
    const std::vector<std::vector<double>> a{e(0), e(0)}, p{e(0), e(1)}, n{e(0, 3, -1.0), e(0)};
    EXPECT_NEAR(triplet_term(a, p, n, 10.0), (6.0 + 12.0) / 2.0, 1e-12);
}

TEST(TotalLoss, HandComputedSingleItem) {
    const double s = 1.0 / std::sqrt(2.0);
    TripletItem item{e(0), {s, s, 0.0}, e(1), e(2), e(0, 3, -1.0)};
    // d(a,p) = 2 - 2s; d(a,np) = 2, d(a,ni) = 2, d(a,ne) = 4.
    const double dap = 2.0 - 2.0 * s;
    raster::BinaryImage target(8, 8);
    target.set(1, 2);
    target.set(5, 5);
    Tensor rec(Shape{1, 8, 8}, 0.25);
    rec[1 * 8 + 2] = 0.9;
    double bce = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
        const double y = target.cells()[i];
        bce -= y * std::log(rec[i]) + (1.0 - y) * std::log(1.0 - rec[i]);
    }
    bce /= 64.0;
    const std::vector<TripletItem> batch{item};
    const std::vector<ReconstructionPair> recs{{rec, target}};
    const auto b = total_loss(batch, recs, 10.0);
    EXPECT_NEAR(b.bce, bce, 1e-12);
    EXPECT_NEAR(b.triplet_pose, dap - 2.0 + 10.0, 1e-12);
    EXPECT_NEAR(b.triplet_identity, dap - 2.0 + 10.0, 1e-12);
    EXPECT_NEAR(b.triplet_emotion, dap - 4.0 + 10.0, 1e-12);
    EXPECT_NEAR(b.total, bce + 3.0 * dap - 8.0 + 30.0, 1e-12);
    EXPECT_NEAR(b.total, b.bce + b.triplet_pose + b.triplet_identity + b.triplet_emotion, 1e-12);
}

TEST(TotalLoss, SatisfiedStateIsZero) {
    // Unit vectors are at most distance 4 apart, so the goal state needs m <= 4.
    const std::vector<TripletItem> batch{{e(0), e(0), e(0, 3, -1.0), e(0, 3, -1.0), e(0, 3, -1.0)}};
    raster::BinaryImage target(8, 8);
    target.set(3, 4);
    const std::vector<ReconstructionPair> recs{{target.to_tensor(), target}};
    const auto b = total_loss(batch, recs, 4.0);
    EXPECT_LE(b.total, 1e-6);
    EXPECT_THROW(total_loss(std::vector<TripletItem>{}, recs, 4.0), ContractError);
}

TEST(TotalLoss, TapeVersionAgreesWithPlainVersion) {
    std::mt19937_64 rng(43);
    std::vector<TripletItem> items;
    for (int i = 0; i < 3; ++i)
        items.push_back({unit(rng, 6), unit(rng, 6), unit(rng, 6), unit(rng, 6), unit(rng, 6)});
    raster::BinaryImage target(8, 8);
    target.set(0, 0);
    const Tensor rec(Shape{1, 8, 8}, oracle::random_vector(64, rng, 0.05, 0.95));
    const auto plain = total_loss(items, std::vector<ReconstructionPair>{{rec, target}}, 10.0);
    ad::Tape tape;
    std::vector<TripletVars> vars;
    for (const auto& it : items) {
        const auto v = [&](const std::vector<double>& x) { return tape.input(Tensor::vector(x)); };
        vars.push_back({v(it.anchor), v(it.positive), v(it.neg_pose), v(it.neg_identity), v(it.neg_emotion)});
    }
    const auto lv = total_loss(tape, vars, std::vector<ReconstructionVars>{{tape.input(rec), target.to_tensor()}}, 10.0);
    const auto tv = lv.values();
    EXPECT_NEAR(tv.total, plain.total, 1e-12);
    EXPECT_NEAR(tv.bce, plain.bce, 1e-12);
    EXPECT_NEAR(tv.triplet_emotion, plain.triplet_emotion, 1e-12);
}

namespace {

data::Dataset grid(std::size_t ids, std::size_t emos, std::size_t poses) {
    data::SyntheticParams p;
    p.identities = ids;
    p.emotions = emos;
    p.poses = poses;
    p.dim = 8;
    p.seed = 7;
    return data::generate_synthetic(p);
}

}  // namespace

TEST(SampleNegatives, ForcedChoiceWithTwoPoses) {
    const auto ds = grid(3, 2, 2);
    const data::SampleKey anchor{"id00", "em00", "p00"};
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto n = sample_negatives(ds, anchor, "p01", s);
        EXPECT_EQ(n.pose, (data::SampleKey{"id00", "em00", "p00"}));
        EXPECT_EQ(n.emotion, (data::SampleKey{"id00", "em01", "p01"}));
        EXPECT_NE(n.identity.identity, "id00");
    }
}

TEST(SampleNegatives, IdentityNeverMatchesAnchorAndIsDeterministic) {
    const auto ds = grid(140, 2, 2);
    const data::SampleKey anchor{"id007", "em00", "p00"};
    ASSERT_TRUE(ds.contains(anchor));
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto n = sample_negatives(ds, anchor, "p01", s);
        ASSERT_NE(n.identity.identity, "id007");
    }
    const auto a = sample_negatives(ds, anchor, "p01", 99), b = sample_negatives(ds, anchor, "p01", 99);
    EXPECT_EQ(a.pose, b.pose);
    EXPECT_EQ(a.identity, b.identity);
    EXPECT_EQ(a.emotion, b.emotion);
}

TEST(SampleNegatives, PoseCandidatesAreUniform) {
    const auto ds = grid(3, 2, 5);
    const data::SampleKey anchor{"id01", "em01", "p00"};
    std::map<std::string, std::size_t> counts;
    const std::size_t draws = 100000;
    for (std::uint64_t s = 0; s < draws; ++s) ++counts[sample_negatives(ds, anchor, "p02", s).pose.pose];
    ASSERT_EQ(counts.size(), 4u);
    EXPECT_EQ(counts.count("p02"), 0u);
    for (const auto& [pose, c] : counts) EXPECT_NEAR(static_cast<double>(c) / (draws / 4.0), 1.0, 0.05) << pose;
}

TEST(SampleNegatives, MissingCategoryIsNamed) {
    data::Dataset ds(3);
    const auto lm = data::synthetic_landmarks(0, 0, 0, 2, 0);
    ds.insert({"a", "x", "p0"}, {1, 0, 0}, lm);
    ds.insert({"a", "x", "p1"}, {0, 1, 0}, lm);
    ds.insert({"b", "x", "p0"}, {0, 0, 1}, lm);
    try {
        sample_negatives(ds, {"a", "x", "p0"}, "p1", 1);
        FAIL() << "expected SamplingError";
    } catch (const SamplingError& err) {
        const std::string msg = err.what();
        EXPECT_NE(msg.find("emotion"), std::string::npos) << msg;
        EXPECT_NE(msg.find("a"), std::string::npos) << msg;
    }
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(44);
    Tensor w({6, 6}, oracle::random_vector(36, rng));
    w.set_requires_grad(true);
    std::vector<Tensor> inputs;
    for (int i = 0; i < 5; ++i) inputs.emplace_back(Shape{1, 6}, oracle::random_vector(6, rng));
    std::vector<ad::NamedParam> params{{"w", &w}};
    ad::CheckOptions opts;
    const auto rep = ad::finite_diff_check(
        [&](ad::Tape& t) {
            std::vector<ad::Var> v;
            for (const auto& x : inputs) v.push_back(ad::reshape(ad::l2_normalize(ad::matmul(t.input(x), t.parameter(w))), {6}));
            const std::vector<TripletVars> batch{{v[0], v[1], v[2], v[3], v[4]}};
            return total_loss(t, batch, {}, 1.0).total;
        },
        params, opts);
    EXPECT_TRUE(rep.passed()) << rep.max_rel_error;
}
