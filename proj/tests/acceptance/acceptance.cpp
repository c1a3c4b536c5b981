// Acceptance suite: one PASS/FAIL line per criterion, exit 3 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fra/app.hpp"
#include "fra/checkpoint.hpp"
#include "fra/config.hpp"
#include "fra/objective.hpp"
#include "fra/ops.hpp"
#include "fra/probe.hpp"
#include "support/attention_properties.hpp"
#include "support/oracles.hpp"

using namespace fra;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [failed]");
    }
};

std::vector<double> unit(std::size_t i, double sign = 1.0) {
    std::vector<double> v(3, 0.0);
    v[i] = sign;
    return v;
}

config::RunConfig base_config(std::uint64_t seed, const fs::path& out) {
    config::RunConfig cfg;
    cfg.apply_seed(seed);
    cfg.out = out.string();
    return cfg;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity(std::uint64_t seed, const fs::path& work) {
    Outcome o;
    auto cfg = base_config(seed, work / "gradcheck");
    const auto t0 = Clock::now();
    const auto rep = app::run_gradcheck(cfg);
    const double secs = seconds_since(t0);
    std::size_t ae = 0, comb = 0;
    for (const auto& [name, n] : rep.per_tensor) (name.rfind("ae.", 0) == 0 ? ae : comb) += n;
    o.require(rep.checked >= 64, std::to_string(rep.checked) + " coordinates");
    o.require(ae > 0 && comb > 0, std::to_string(ae) + " autoencoder / " + std::to_string(comb) + " combiner");
    o.require(rep.step == 1e-5, "h " + fmt(rep.step));
    o.require(rep.passed() && rep.max_rel_error < 1e-4,
              "max rel error " + fmt(rep.max_rel_error) + " at " + rep.worst.tensor + "[" +
                  std::to_string(rep.worst.index) + "]");
    o.require(secs < 60.0, fmt(secs, 3) + " s");
    return o;
}

Outcome attention_correctness(std::uint64_t seed) {
    Outcome o;
    const auto t0 = Clock::now();
    const auto s = oracle::run_attention_properties(1000, seed);
    const double secs = seconds_since(t0);
    o.require(s.cases == 1000, std::to_string(s.cases) + " cases");
    o.require(s.max_row_sum_error < 1e-9, "row sum error " + fmt(s.max_row_sum_error));
    o.require(s.max_envelope_excess <= 1e-12, "envelope excess " + fmt(s.max_envelope_excess));
    o.require(s.max_single_head_diff < 1e-12, "single head diff " + fmt(s.max_single_head_diff));
    o.require(s.max_permutation_diff < 1e-12, "permutation diff " + fmt(s.max_permutation_diff));
    o.require(s.max_direct_rel_error < 1e-10, "direct rel error " + fmt(s.max_direct_rel_error));
    o.require(secs < 10.0, fmt(secs, 3) + " s");
    return o;
}

Outcome loss_semantics() {
    using namespace objective;
    Outcome o;
    const double m = 10.0;
    const std::vector<double> a = unit(0);
    const std::vector<std::vector<double>> at{unit(0), unit(1), unit(0, -1.0)};
    const double d[] = {0.0, 2.0, 4.0};
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            worst = std::max(worst, std::abs(triplet_term(a, at[i], at[j], m) - std::max(d[i] - d[j] + m, 0.0)));
    o.require(kDefaultMargin == m && worst <= 1e-12, "extreme cases at margin 10, max error " + fmt(worst));

    const double s = 1.0 / std::sqrt(2.0);
    const std::vector<TripletItem> batch{{unit(0), {s, s, 0.0}, unit(1), unit(2), unit(0, -1.0)}};
    raster::BinaryImage target(8, 8);
    target.set(1, 2);
    Tensor rec(Shape{1, 8, 8}, 0.25);
    rec[1 * 8 + 2] = 0.9;
    const std::vector<ReconstructionPair> recs{{rec, target}};
    const auto b = total_loss(batch, recs, m);
    const double sum_err = std::abs(b.total - (b.bce + b.triplet_pose + b.triplet_identity + b.triplet_emotion));
    const double dap = 2.0 - 2.0 * s;
    const double hand = std::abs(b.triplet_pose - (dap - 2.0 + m)) + std::abs(b.triplet_emotion - (dap - 4.0 + m));
    o.require(sum_err <= 1e-12 && hand <= 1e-12, "total minus component sum " + fmt(sum_err));

    // Unit vectors are at most distance 4 apart, so every triplet can be
    // satisfied only for m <= 4; the boundary case m = 4 is checked.
    const std::vector<TripletItem> goal{{unit(0), unit(0), unit(0, -1.0), unit(0, -1.0), unit(0, -1.0)}};
    raster::BinaryImage img(8, 8);
    img.set(3, 4);
    const std::vector<ReconstructionPair> goal_recs{{img.to_tensor(), img}};
    const double satisfied = total_loss(goal, goal_recs, 4.0).total;
    o.require(satisfied <= 1e-6, "satisfied state total " + fmt(satisfied));
    return o;
}

Outcome oracle_equivalence(std::uint64_t seed) {
    Outcome o;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> ext(1, 8);
    double mm = 0.0, cv = 0.0, bc = 0.0, auc = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
        const auto a = oracle::random_vector(m * k, rng), b = oracle::random_vector(k * n, rng);
        ad::Tape tape;
        const auto v = ad::matmul(tape.input(Tensor({m, k}, a)), tape.input(Tensor({k, n}, b))).value().values();
        mm = std::max(mm, oracle::max_rel_error({v.begin(), v.end()}, oracle::matmul(a, b, m, k, n)));
    }
    for (int done = 0; done < 200;) {
        std::uniform_int_distribution<std::size_t> ch(1, 3), kk(1, 4), st(1, 2), pd(0, 2);
        const std::size_t cin = ch(rng), cout = ch(rng), h = ext(rng), w = ext(rng), k = kk(rng), s = st(rng),
                          p = pd(rng);
        if (h + 2 * p < k || w + 2 * p < k || (h + 2 * p - k) % s != 0 || (w + 2 * p - k) % s != 0) continue;
        const auto x = oracle::random_vector(cin * h * w, rng), kern = oracle::random_vector(cout * cin * k * k, rng),
                   bias = oracle::random_vector(cout, rng);
        ad::Tape tape;
        const auto v = ad::conv2d(tape.input(Tensor({cin, h, w}, x)), tape.input(Tensor({cout, cin, k, k}, kern)),
                                  tape.input(Tensor({cout}, bias)), {s, p})
                           .value()
                           .values();
        cv = std::max(cv, oracle::max_rel_error({v.begin(), v.end()}, oracle::conv2d(x, kern, bias, cin, h, w, cout, k, s, p)));
        ++done;
    }
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = ext(rng) * 8;
        const auto p = oracle::random_vector(n, rng, 0.0, 1.0);
        std::vector<double> y(n);
        for (auto& v : y) v = rng() % 2 ? 1.0 : 0.0;
        ad::Tape tape;
        const double got = ad::bce_mean(tape.input(Tensor(Shape{n}, p)), Tensor(Shape{n}, y)).value().item();
        bc = std::max(bc, std::abs(got - oracle::bce(p, y)));
    }
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 20 + ext(rng) * 10, k = 2 + ext(rng) % 4;
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = i % k;
        std::shuffle(labels.begin(), labels.end(), rng);
        Eigen::MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index i = 0; i < s.rows(); ++i)
            for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = std::round(u(rng) * 20.0) / 20.0;
        std::vector<std::string> names;
        for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
        const auto r = eval::roc_points(s, labels, names);
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> col(n);
            std::vector<bool> pos(n);
            for (std::size_t i = 0; i < n; ++i) {
                col[i] = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                pos[i] = labels[i] == c;
            }
            auc = std::max(auc, std::abs(r.per_class[c].auc - oracle::pairwise_auc(col, pos)));
        }
    }
    o.require(mm < 1e-12, "matmul vs triple loop " + fmt(mm));
    o.require(cv < 1e-12, "conv2d vs quadruple loop " + fmt(cv));
    o.require(bc < 1e-12, "bce vs direct sum " + fmt(bc));
    o.require(auc < 1e-12, "auc vs pairwise count " + fmt(auc));
    return o;
}

// The end-to-end run is shared by the end-to-end and protocol criteria.
struct EndToEnd {
    config::RunConfig cfg;
    app::TrainResult train;
    app::EvalOutputs eval;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
};

EndToEnd run_end_to_end(std::uint64_t seed, const fs::path& work) {
    EndToEnd r;
    r.cfg = base_config(seed, work / "e2e");
    r.cfg.optim.steps = 200;
    r.cfg.optim.batch_size = 16;
    r.cfg.optim.learning_rate = 0.01;
    r.cfg.optim.momentum = 0.9;
    fs::remove_all(r.cfg.out);
    auto t0 = Clock::now();
    r.train = app::run_train(r.cfg, {});
    r.train_seconds = seconds_since(t0);
    t0 = Clock::now();
    r.eval = app::run_eval(r.cfg, r.train.final_checkpoint.string());
    r.eval_seconds = seconds_since(t0);
    return r;
}

// Cosine gain of the direction that minimizes the triplet terms when the hinge
// never switches off: 3 x_target minus the mean of each negative pool, with
// identity negatives from the training identities.
double loss_optimal_gain(const data::Dataset& test, const data::Dataset& train) {
    const auto& truth = *test.factor_truth();
    double gain = 0.0;
    std::size_t n = 0;
    const auto add = [](std::vector<double>& acc, const std::vector<double>& v, double w) {
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += w * v[i];
    };
    const auto cosine = [](const std::vector<double>& x, const std::vector<double>& y) {
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) xy += x[i] * y[i], xx += x[i] * x[i], yy += y[i] * y[i];
        return xy / std::sqrt(xx * yy);
    };
    for (const auto& [key, rec] : test.records()) {
        std::vector<double> dir(test.dim(), 0.0);
        add(dir, rec.embedding, 3.0);
        std::vector<const data::Record*> pose_neg, emo_neg, id_neg;
        for (const auto& [k, r] : train.records()) id_neg.push_back(&r);
        for (const auto& [k, r] : test.records()) {
            if (k.identity != key.identity) continue;
            if (k.emotion == key.emotion && k.pose != key.pose) pose_neg.push_back(&r);
            else if (k.emotion != key.emotion && k.pose == key.pose) emo_neg.push_back(&r);
        }
        for (const auto* pool : {&pose_neg, &emo_neg, &id_neg})
            for (const auto* r : *pool) add(dir, r->embedding, -1.0 / static_cast<double>(pool->size()));
        const auto t = truth.oracle_target(key);
        for (const auto& [b, br] : test.records()) {
            if (b.identity != key.identity || b.emotion != key.emotion || b.pose == key.pose) continue;
            gain += cosine(dir, t) - cosine(br.embedding, t);
            ++n;
        }
    }
    return gain / static_cast<double>(n);
}

Outcome end_to_end(const EndToEnd& r) {
    Outcome o;
    const auto& rep = r.eval.report;
    const auto& id = rep.result(eval::Target::kIdentity);
    const auto& pose = rep.result(eval::Target::kPose);
    o.require(r.train_seconds + r.eval_seconds <= 300.0,
              "train " + fmt(r.train_seconds, 3) + " s, eval " + fmt(r.eval_seconds, 3) + " s");
    o.require(id.accuracy[2] >= id.accuracy[0],
              "(a) identity exp3 " + fmt(id.accuracy[2]) + " vs exp1 " + fmt(id.accuracy[0]));
    o.require(pose.accuracy[1] >= 0.8, "(b) pose exp2 " + fmt(pose.accuracy[1]));
    const double gain = rep.cosine_augmented - rep.cosine_base;
    const data::Dataset full = app::load_dataset(r.cfg);
    const double ceiling = loss_optimal_gain(full.subset(rep.split.test), full.subset(rep.split.train));
    o.require(rep.has_oracle && gain >= 0.05, "(c) cosine gain " + fmt(gain) + " (augmented " +
                                                  fmt(rep.cosine_augmented) + ", base " + fmt(rep.cosine_base) +
                                                  "), needs 0.05; loss-optimal direction gains " + fmt(ceiling));
    return o;
}

Outcome ae_convergence(std::uint64_t seed) {
    Outcome o;
    const config::RunConfig cfg = base_config(seed, "unused");
    const data::Dataset dataset = app::load_dataset(cfg);
    const data::SplitSpec split = app::make_split(dataset, cfg);
    ImageCache images(dataset, cfg.model.autoencoder.image_size, cfg.model.raster_radius);
    const std::set<std::string> fit_ids{split.train[0], split.train[1]};
    std::vector<data::SampleKey> fit_keys, held_keys;
    for (const auto& k : dataset.keys()) {
        if (fit_ids.count(k.identity)) fit_keys.push_back(k);
        if (std::find(split.test.begin(), split.test.end(), k.identity) != split.test.end()) held_keys.push_back(k);
    }
    std::vector<Tensor> batch;
    for (const auto& k : fit_keys) batch.push_back(images.tensor(k));
    pose::Autoencoder ae(cfg.model.autoencoder, seed);
    const auto bce = train::pretrain_autoencoder(ae, batch, 200, 0.01, 0.9);

    std::vector<double> ma;
    for (std::size_t t = 10; t <= bce.size(); ++t) {
        double s = 0.0;
        for (std::size_t i = t - 10; i < t; ++i) s += bce[i];
        ma.push_back(s / 10.0);
    }
    std::size_t rises = 0;
    for (std::size_t i = 1; i < ma.size(); ++i) rises += !(ma[i] < ma[i - 1]);
    o.require(batch.size() == 32, std::to_string(batch.size()) + " images");
    o.require(bce.size() == 200 && rises == 0, "moving average " + fmt(ma.front()) + " -> " + fmt(ma.back()) + ", " +
                                                   std::to_string(rises) + " non-decreasing windows");

    std::map<std::string, std::vector<double>> centroid;
    std::map<std::string, std::size_t> count;
    for (const auto& k : fit_keys) {
        const Tensor z = ae.encode(images.image(k));
        auto& c = centroid[k.pose];
        c.resize(z.numel(), 0.0);
        for (std::size_t i = 0; i < z.numel(); ++i) c[i] += z[i];
        ++count[k.pose];
    }
    for (auto& [p, c] : centroid)
        for (double& v : c) v /= static_cast<double>(count[p]);
    std::size_t correct = 0;
    for (const auto& k : held_keys) {
        const Tensor z = ae.encode(images.image(k));
        std::string best;
        double best_d = INFINITY;
        for (const auto& [p, c] : centroid) {
            double d = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) d += (z[i] - c[i]) * (z[i] - c[i]);
            if (d < best_d) best_d = d, best = p;
        }
        correct += best == k.pose;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(held_keys.size());
    o.require(acc >= 0.9, "held-out nearest-centroid pose " + std::to_string(correct) + "/" +
                              std::to_string(held_keys.size()));
    return o;
}

std::map<std::string, std::string> run_pipeline(const config::RunConfig& cfg) {
    fs::remove_all(cfg.out);
    app::run_synth(cfg);
    const auto t = app::run_train(cfg, {});
    app::AugmentRequest aug;
    aug.checkpoint = t.final_checkpoint.string();
    aug.test_only = true;
    app::run_augment(cfg, aug);
    app::run_eval(cfg, t.final_checkpoint.string());
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(cfg.out))
        if (e.is_regular_file()) files[fs::relative(e.path(), cfg.out).string()] = slurp(e.path());
    return files;
}

Outcome determinism(std::uint64_t seed, const fs::path& work) {
    Outcome o;
    auto cfg = base_config(seed, work / "determinism");
    cfg.optim.steps = 20;
    cfg.optim.learning_rate = 0.01;
    cfg.optim.momentum = 0.9;
    const auto first = run_pipeline(cfg);
    const auto second = run_pipeline(cfg);
    std::size_t ckpts = 0, csvs = 0, reports = 0, differing = 0;
    for (const auto& [name, bytes] : first) {
        const auto ext = fs::path(name).extension();
        ckpts += ext == ".ckpt", csvs += ext == ".csv", reports += ext == ".json" || ext == ".svg";
        const auto it = second.find(name);
        if (it == second.end() || it->second != bytes) ++differing;
    }
    o.require(first.size() == second.size() && differing == 0,
              std::to_string(first.size()) + " files (" + std::to_string(ckpts) + " ckpt, " + std::to_string(csvs) +
                  " csv, " + std::to_string(reports) + " json/svg), " + std::to_string(differing) + " differ");
    o.require(ckpts > 0 && csvs > 0 && reports > 0, "every artifact kind present");

    const std::string bytes = first.at("final.ckpt");
    const auto c = ckpt::deserialize(bytes);
    o.require(ckpt::serialize(c) == bytes, "checkpoint re-serializes to identical bytes");
    const FraModel model = app::model_from_checkpoint(c);
    ckpt::Checkpoint again;
    ckpt::store_model(again, model);
    std::size_t tensors = 0, mismatched = 0;
    // The checkpoint also carries optimizer state; every model tensor must come back bit for bit.
    for (const auto& [name, t] : again.tensors) {
        ++tensors;
        const auto it = c.tensors.find(name);
        if (it == c.tensors.end() || it->second.shape() != t.shape() ||
            std::memcmp(it->second.values().data(), t.values().data(), t.numel() * sizeof(double)) != 0)
            ++mismatched;
    }
    o.require(tensors > 0 && mismatched == 0,
              std::to_string(tensors) + " model tensors restored bitwise, " + std::to_string(mismatched) +
                  " mismatched");
    return o;
}

Outcome protocol_fidelity(const EndToEnd& r) {
    Outcome o;
    const data::Dataset dataset = app::load_dataset(r.cfg);
    const auto split = app::split_from_checkpoint(ckpt::load(r.train.final_checkpoint));
    const std::set<std::string> tr(split.train.begin(), split.train.end()), va(split.val.begin(), split.val.end()),
        te(split.test.begin(), split.test.end());
    std::size_t unassigned = 0, doubly = 0;
    for (const auto& k : dataset.keys()) {
        const std::size_t n = tr.count(k.identity) + va.count(k.identity) + te.count(k.identity);
        unassigned += n == 0, doubly += n > 1;
    }
    const auto counts = data::proportional_split_counts(dataset.identities().size());
    o.require(unassigned == 0 && doubly == 0, std::to_string(dataset.size()) + " keys audited, " +
                                                  std::to_string(unassigned) + " unassigned, " +
                                                  std::to_string(doubly) + " in two groups");
    o.require(split.train.size() == counts[0] && split.val.size() == counts[1] && split.test.size() == counts[2] &&
                  data::proportional_split_counts(140) == std::array<std::size_t, 3>{99, 11, 30},
              "split " + std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
                  std::to_string(split.test.size()));
    o.require(r.eval.report.split == split, "report split matches checkpoint");

    const auto& rep = r.eval.report;
    std::size_t cells = 0, same = 0;
    bool in_test = true;
    double held_fraction = 0.0;
    for (const auto& t : rep.targets) {
        for (double a : t.accuracy) cells += std::isfinite(a) && a >= 0.0 && a <= 1.0;
        same += t.exp1_eval_keys == t.exp3_eval_keys && !t.exp1_eval_keys.empty();
        for (const auto& k : t.exp1_eval_keys) in_test = in_test && te.count(k.identity) > 0;
        held_fraction = std::max(held_fraction, static_cast<double>(t.exp1_eval_keys.size()) /
                                                    static_cast<double>(rep.test_samples));
    }
    o.require(rep.targets.size() == 3 && cells == 9, std::to_string(cells) + " accuracy cells");
    o.require(same == rep.targets.size() && in_test,
              "exp1 and exp3 share held-out test keys (" + fmt(100.0 * held_fraction, 3) + "% of test samples)");
    o.require(held_fraction > 0.15 && held_fraction <= 0.25, "held-out fraction near 20%");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Acceptance checks"};
    std::uint64_t seed = 0;
    std::string work = (fs::temp_directory_path() / "fra_acceptance").string();
    std::vector<int> only;
    cli.add_option("--seed", seed, "Seed for every check");
    cli.add_option("--work", work, "Scratch directory");
    cli.add_option("--only", only, "Run only these criteria (1-8)");
    CLI11_PARSE(cli, argc, argv);

    const fs::path dir(work);
    fs::create_directories(dir);
    const auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    std::optional<EndToEnd> e2e;
    const auto shared_run = [&]() -> const EndToEnd& {
        if (!e2e) e2e = run_end_to_end(seed, dir);
        return *e2e;
    };
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient integrity", [&] { return gradient_integrity(seed, dir); }},
        {"attention correctness", [&] { return attention_correctness(seed); }},
        {"loss semantics", [&] { return loss_semantics(); }},
        {"oracle equivalence", [&] { return oracle_equivalence(seed); }},
        {"end-to-end augmentation", [&] { return end_to_end(shared_run()); }},
        {"autoencoder convergence", [&] { return ae_convergence(seed); }},
        {"determinism and persistence", [&] { return determinism(seed, dir); }},
        {"protocol fidelity", [&] { return protocol_fidelity(shared_run()); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!wanted(n)) continue;
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << criteria[i].first << " ("
                  << fmt(seconds_since(t0), 3) << " s): " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 3;
}
