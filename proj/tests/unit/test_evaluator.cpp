#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "fra/error.hpp"
#include "fra/evaluator.hpp"
#include "fra/probe.hpp"
#include "support/oracles.hpp"
#include "support/small_model.hpp"

using namespace fra;
using namespace fra::eval;

namespace {

Eigen::MatrixXd embeddings_of(const data::Dataset& ds, std::vector<std::string>& labels, Target t) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.dim()));
    Eigen::Index r = 0;
    for (const auto& [k, rec] : ds.records()) {
        for (std::size_t c = 0; c < ds.dim(); ++c) x(r, static_cast<Eigen::Index>(c)) = rec.embedding[c];
        labels.push_back(label_of(k, t));
        ++r;
    }
    return x;
}

}  // namespace

TEST(Probe, AntipodalPairIsSeparated) {
    Eigen::MatrixXd x(2, 3);
    x << 1, 0, 0, -1, 0, 0;
    const std::vector<std::string> y{"a", "b"};
    const auto probe = train_probe(x, y, {}, 1);
    EXPECT_EQ(probe.accuracy(x, y), 1.0);
    EXPECT_THROW(train_probe(x, {"a", "a"}, {}, 1), ConfigError);
}

TEST(Probe, SeparableDataIsFitExactly) {
    auto p = testing_support::small_data();
    p.noise_sigma = 0.0;
    const auto ds = data::generate_synthetic(p);
    std::vector<std::string> y;
    const auto x = embeddings_of(ds, y, Target::kIdentity);
    EXPECT_EQ(train_probe(x, y, {}, 2).accuracy(x, y), 1.0);
}

TEST(Probe, ShuffledLabelsScoreNearChance) {
    auto p = testing_support::small_data();
    p.identities = 40;
    p.emotions = 5;
    p.poses = 5;
    const auto ds = data::generate_synthetic(p);
    std::vector<std::string> y;
    const auto x = embeddings_of(ds, y, Target::kPose);
    std::mt19937_64 rng(3);
    std::shuffle(y.begin(), y.end(), rng);
    const auto split = stratified_split(y, 0.2, 4);
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(split.train.size()), x.cols()),
        xte(static_cast<Eigen::Index>(split.held.size()), x.cols());
    std::vector<std::string> ytr, yte;
    for (std::size_t i = 0; i < split.train.size(); ++i)
        xtr.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(split.train[i])), ytr.push_back(y[split.train[i]]);
    for (std::size_t i = 0; i < split.held.size(); ++i)
        xte.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(split.held[i])), yte.push_back(y[split.held[i]]);
    EXPECT_NEAR(train_probe(xtr, ytr, {}, 5).accuracy(xte, yte), 1.0 / 5.0, 0.1);
}

TEST(Probe, ConvexObjectiveFromTwoStartsAndReproducible) {
    const auto ds = data::generate_synthetic(testing_support::small_data());
    std::vector<std::string> y;
    const auto x = embeddings_of(ds, y, Target::kEmotion);
    const ProbeConfig cfg;
    const auto a = train_probe(x, y, cfg, 10), b = train_probe(x, y, cfg, 11);
    EXPECT_LT(a.final_grad_norm, cfg.grad_tolerance);
    EXPECT_LT(b.final_grad_norm, cfg.grad_tolerance);
    EXPECT_NEAR(probe_objective(a, x, y, cfg.l2_penalty), probe_objective(b, x, y, cfg.l2_penalty), 1e-6);
    EXPECT_NEAR(a.final_loss, b.final_loss, 1e-6);
    const auto again = train_probe(x, y, cfg, 10);
    EXPECT_NEAR(again.accuracy(x, y), a.accuracy(x, y), 1e-9);
    EXPECT_EQ(again.weight, a.weight);
}

TEST(Roc, PerfectScorerHasUnitAuc) {
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 2};
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(7, 3);
    for (std::size_t i = 0; i < labels.size(); ++i) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
    const auto r = roc_points(s, labels, {"a", "b", "c"});
    ASSERT_EQ(r.per_class.size(), 3u);
    for (const auto& c : r.per_class) EXPECT_DOUBLE_EQ(c.auc, 1.0);
    EXPECT_DOUBLE_EQ(r.macro_auc, 1.0);
    const auto& first = r.per_class[0].points.front();
    EXPECT_TRUE(std::isinf(first.threshold));
    EXPECT_EQ(first.fpr, 0.0);
    EXPECT_EQ(r.per_class[0].points.back().tpr, 1.0);
}

TEST(Roc, RandomScoresNearHalfAndPairwiseOracle) {
    std::mt19937_64 rng(6);
    const std::size_t n = 1000, k = 4;
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % k;
    Eigen::MatrixXd s(n, k);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = std::round(u(rng) * 50.0) / 50.0;  // forces ties
    const auto r = roc_points(s, labels, {"a", "b", "c", "d"});
    EXPECT_NEAR(r.macro_auc, 0.5, 0.05);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> col(n);
        std::vector<bool> pos(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)), pos[i] = labels[i] == c;
        EXPECT_NEAR(r.per_class[c].auc, oracle::pairwise_auc(col, pos), 1e-6);
    }
}

TEST(Roc, AbsentClassIsExcluded) {
    Eigen::MatrixXd s(3, 3);
    s << 0.9, 0.1, 0.0, 0.2, 0.7, 0.1, 0.8, 0.1, 0.1;
    const auto r = roc_points(s, {0, 1, 0}, {"a", "b", "c"});
    EXPECT_EQ(r.excluded, (std::vector<std::string>{"c"}));
    EXPECT_EQ(r.per_class.size(), 2u);
}

TEST(Confusion, RowSumsAreClassCounts) {
    std::mt19937_64 rng(7);
    std::vector<std::size_t> truth(200), pred(200);
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t i = 0; i < 200; ++i) truth[i] = rng() % 5, pred[i] = rng() % 5, ++counts[truth[i]];
    const auto m = confusion_matrix(truth, pred, 5);
    std::size_t total = 0;
    for (std::size_t c = 0; c < 5; ++c) {
        std::size_t row = 0;
        for (auto v : m[c]) row += v;
        EXPECT_EQ(row, counts[c]);
        total += row;
    }
    EXPECT_EQ(total, 200u);
}

TEST(StratifiedSplit, HoldsOutPerClass) {
    std::vector<std::string> y;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 10; ++i) y.push_back("c" + std::to_string(c));
    y.push_back("lonely");
    const auto s = stratified_split(y, 0.2, 8);
    EXPECT_EQ(s.held.size(), 8u);
    EXPECT_EQ(s.train.size() + s.held.size(), y.size());
    for (auto i : s.held) EXPECT_NE(y[i], "lonely");
    const auto t = stratified_split(y, 0.2, 8);
    EXPECT_EQ(s.held, t.held);
}

class Protocol : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dataset_ = new data::Dataset(data::generate_synthetic(testing_support::small_data()));
        split_ = new data::SplitSpec(data::split_by_identity(*dataset_, {6, 1, 3}, 2));
        model_ = new FraModel(testing_support::small_model_config(), 3);
        EvalConfig cfg;
        cfg.seed = 4;
        report_ = new EvalReport(run_protocol(*dataset_, *split_, *model_, cfg, "unit"));
    }
    static void TearDownTestSuite() {
        delete report_;
        delete model_;
        delete split_;
        delete dataset_;
    }
    static data::Dataset* dataset_;
    static data::SplitSpec* split_;
    static FraModel* model_;
    static EvalReport* report_;
};

data::Dataset* Protocol::dataset_ = nullptr;
data::SplitSpec* Protocol::split_ = nullptr;
FraModel* Protocol::model_ = nullptr;
EvalReport* Protocol::report_ = nullptr;

TEST_F(Protocol, NineCellsOnTheSameHeldOutSet) {
    ASSERT_EQ(report_->targets.size(), 3u);
    const std::set<std::string> test(split_->test.begin(), split_->test.end());
    for (const auto& t : report_->targets) {
        for (double a : t.accuracy) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, 1.0);
        }
        EXPECT_EQ(t.exp1_eval_keys, t.exp3_eval_keys);
        EXPECT_FALSE(t.exp1_eval_keys.empty());
        for (const auto& k : t.exp1_eval_keys) EXPECT_TRUE(test.count(k.identity)) << k.str();
        EXPECT_GT(t.train_size[2], t.train_size[0]);
        std::size_t total = 0;
        for (const auto& row : t.confusion)
            for (auto v : row) total += v;
        EXPECT_EQ(total, t.eval_size[2]);
    }
    EXPECT_EQ(report_->test_samples, 3u * 3u * 3u);
    EXPECT_EQ(report_->augmentations, 3u * 3u * 3u * 2u);
    EXPECT_TRUE(report_->has_oracle);
}

TEST_F(Protocol, ReportIsDeterministicAndWritesCsvs) {
    EvalConfig cfg;
    cfg.seed = 4;
    const auto again = run_protocol(*dataset_, *split_, *model_, cfg, "unit");
    EXPECT_EQ(report_json(*report_), report_json(again));
    const auto dir = std::filesystem::temp_directory_path() / "fra_unit_report";
    std::filesystem::remove_all(dir);
    const auto files = write_report(*report_, dir);
    EXPECT_TRUE(std::filesystem::exists(files.json));
    ASSERT_EQ(files.roc.size(), 3u);
    std::ifstream in(files.roc[0]);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "threshold,fpr,tpr");
}

TEST(ProtocolErrors, TestIdentitiesMustBeDisjointFromTraining) {
    const auto ds = data::generate_synthetic(testing_support::small_data());
    const FraModel model(testing_support::small_model_config(), 3);
    auto split = data::split_by_identity(ds, {6, 1, 3}, 2);
    split.test.push_back(split.train.front());
    EXPECT_THROW(run_protocol(ds, split, model, {}, "x"), ContractError);
}
