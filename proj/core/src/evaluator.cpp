#include "fra/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "fra/csv.hpp"
#include "fra/error.hpp"
#include "fra/rng.hpp"

namespace fra::eval {

void EvalConfig::validate() const {
    if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("eval.holdout must be in (0, 1)");
    if (!(probe.l2_penalty >= 0.0)) throw ConfigError("eval.l2 must be >= 0");
    if (probe.max_steps == 0) throw ConfigError("eval.max_steps must be at least 1");
    if (!(probe.grad_tolerance > 0.0)) throw ConfigError("eval.grad_tolerance must be positive");
}

std::string target_name(Target t) {
    switch (t) {
        case Target::kPose: return "pose";
        case Target::kIdentity: return "identity";
        case Target::kEmotion: return "emotion";
    }
    return "?";
}

const std::string& label_of(const data::SampleKey& key, Target t) {
    switch (t) {
        case Target::kPose: return key.pose;
        case Target::kIdentity: return key.identity;
        case Target::kEmotion: return key.emotion;
    }
    return key.pose;
}

const TargetResult& EvalReport::result(Target t) const {
    for (const auto& r : targets) {
        if (r.target == t) return r;
    }
    throw ContractError("report has no result for target " + target_name(t));
}

std::vector<Augmentation> augment_all(const FraModel& model, const data::Dataset& samples, ImageCache& images) {
    std::vector<Augmentation> out;
    const auto poses = samples.poses();
    for (const auto& [key, rec] : samples.records()) {
        for (const auto& p : poses) {
            if (p == key.pose) continue;
            data::SampleKey target{key.identity, key.emotion, p};
            if (!samples.contains(target)) continue;
            out.push_back({key, target, model.augment(rec.embedding, images.image(target))});
        }
    }
    return out;
}

InnerSplit stratified_split(const std::vector<std::string>& labels, double holdout, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    InnerSplit s;
    std::uint64_t class_no = 0;
    for (auto& [label, idx] : by_class) {
        const std::uint64_t cs = derive_seed(seed, class_no++);
        for (std::size_t i = idx.size(); i > 1; --i) {
            const auto j = std::min(static_cast<std::size_t>(counter_uniform(cs, 0, i) * static_cast<double>(i)), i - 1);
            std::swap(idx[i - 1], idx[j]);
        }
        std::size_t n_held = 0;
        if (idx.size() >= 2) {
            n_held = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(holdout * static_cast<double>(idx.size()))));
            n_held = std::min(n_held, idx.size() - 1);
        }
        s.held.insert(s.held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
        s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.held.begin(), s.held.end());
    return s;
}

namespace {

Eigen::MatrixXd rows_of(const std::vector<const std::vector<double>*>& vecs) {
    if (vecs.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vecs.size()), static_cast<Eigen::Index>(vecs.front()->size()));
    for (std::size_t r = 0; r < vecs.size(); ++r) {
        for (std::size_t c = 0; c < vecs[r]->size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*vecs[r])[c];
    }
    return m;
}

struct Sample {
    data::SampleKey key;
    const std::vector<double>* embedding;
};

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    return ab / std::sqrt(aa * bb);
}

double fit_and_score(const std::vector<Sample>& train, const std::vector<Sample>& test, Target target,
                     const EvalConfig& cfg, std::uint64_t seed, LinearProbe* keep) {
    std::vector<const std::vector<double>*> xtr, xte;
    std::vector<std::string> ytr, yte;
    for (const auto& s : train) {
        xtr.push_back(s.embedding);
        ytr.push_back(label_of(s.key, target));
    }
    for (const auto& s : test) {
        xte.push_back(s.embedding);
        yte.push_back(label_of(s.key, target));
    }
    LinearProbe probe = train_probe(rows_of(xtr), ytr, cfg.probe, seed);
    const auto pred = probe.predict(rows_of(xte));
    std::size_t hits = 0;
    // Labels the probe never saw count as misses.
    for (std::size_t i = 0; i < yte.size(); ++i) {
        const auto it = std::find(probe.classes.begin(), probe.classes.end(), yte[i]);
        if (it != probe.classes.end() && static_cast<std::size_t>(it - probe.classes.begin()) == pred[i]) ++hits;
    }
    if (keep) *keep = std::move(probe);
    return yte.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(yte.size());
}

}  // namespace

EvalReport run_protocol(const data::Dataset& dataset, const data::SplitSpec& split, const FraModel& model,
                        const EvalConfig& config, const std::string& checkpoint_id) {
    config.validate();
    if (split.test.empty()) throw ConfigError("evaluation needs at least one test identity");
    for (const auto& id : split.test) {
        if (std::find(split.train.begin(), split.train.end(), id) != split.train.end()) {
            throw ContractError("test identity " + id + " is also a training identity");
        }
    }
    if (dataset.dim() != model.config.combiner.face_dim) {
        throw ConfigError("dataset embedding length " + std::to_string(dataset.dim()) + " does not match model face_dim " +
                          std::to_string(model.config.combiner.face_dim));
    }
    const data::Dataset test = dataset.subset(split.test);
    if (test.empty()) throw ConfigError("test identities have no records");
    ImageCache images(dataset, model.config.autoencoder.image_size, model.config.raster_radius);
    const std::vector<Augmentation> augs = augment_all(model, test, images);

    EvalReport report;
    report.seed = config.seed;
    report.split = split;
    report.checkpoint_id = checkpoint_id;
    report.test_samples = test.size();
    report.augmentations = augs.size();

    if (const auto& truth = dataset.factor_truth(); truth && !augs.empty()) {
        report.has_oracle = true;
        for (const auto& a : augs) {
            const auto target = truth->oracle_target(a.key);
            report.cosine_augmented += cosine(a.embedding, target);
            report.cosine_base += cosine(test.at(a.base).embedding, target);
        }
        report.cosine_augmented /= static_cast<double>(augs.size());
        report.cosine_base /= static_cast<double>(augs.size());
    }

    std::vector<Sample> real;
    for (const auto& [k, r] : test.records()) real.push_back({k, &r.embedding});
    std::vector<Sample> generated;
    for (const auto& a : augs) generated.push_back({a.key, &a.embedding});

    for (Target target : kTargets) {
        const std::uint64_t tseed = derive_seed(config.seed, 0xe0 + static_cast<std::uint64_t>(target));
        TargetResult res;
        res.target = target;

        std::vector<std::string> real_labels;
        for (const auto& s : real) real_labels.push_back(label_of(s.key, target));
        const InnerSplit inner = stratified_split(real_labels, config.holdout, tseed);
        std::vector<Sample> real_train, real_held;
        std::map<data::SampleKey, bool> in_train;
        for (auto i : inner.train) {
            real_train.push_back(real[i]);
            in_train[real[i].key] = true;
        }
        for (auto i : inner.held) real_held.push_back(real[i]);

        // Experiment 1.
        res.accuracy[0] = fit_and_score(real_train, real_held, target, config, tseed, nullptr);
        res.train_size[0] = real_train.size();
        res.eval_size[0] = real_held.size();
        for (const auto& s : real_held) res.exp1_eval_keys.push_back(s.key);

        // Experiment 2.
        if (!generated.empty()) {
            std::vector<std::string> gen_labels;
            for (const auto& s : generated) gen_labels.push_back(label_of(s.key, target));
            const InnerSplit gsplit = stratified_split(gen_labels, config.holdout, derive_seed(tseed, 2));
            std::vector<Sample> gtr, gte;
            for (auto i : gsplit.train) gtr.push_back(generated[i]);
            for (auto i : gsplit.held) gte.push_back(generated[i]);
            res.accuracy[1] = fit_and_score(gtr, gte, target, config, tseed, nullptr);
            res.train_size[1] = gtr.size();
            res.eval_size[1] = gte.size();
        }

        // Experiment 3.
        std::vector<Sample> combined = real_train;
        for (std::size_t g = 0; g < augs.size(); ++g) {
            if (in_train.contains(augs[g].base)) combined.push_back(generated[g]);
        }
        LinearProbe probe3;
        res.accuracy[2] = fit_and_score(combined, real_held, target, config, tseed, &probe3);
        res.train_size[2] = combined.size();
        res.eval_size[2] = real_held.size();
        for (const auto& s : real_held) res.exp3_eval_keys.push_back(s.key);

        // ROC and confusion over every class seen by the probe.
        std::vector<const std::vector<double>*> xh;
        std::vector<std::size_t> truth;
        for (const auto& s : real_held) {
            const auto it = std::find(probe3.classes.begin(), probe3.classes.end(), label_of(s.key, target));
            if (it == probe3.classes.end()) continue;
            xh.push_back(s.embedding);
            truth.push_back(static_cast<std::size_t>(it - probe3.classes.begin()));
        }
        res.classes = probe3.classes;
        if (!xh.empty()) {
            const Eigen::MatrixXd x = rows_of(xh);
            res.confusion = confusion_matrix(truth, probe3.predict(x), probe3.classes.size());
            res.roc = roc_points(probe3.probabilities(x), truth, probe3.classes);
        }
        report.targets.push_back(std::move(res));
    }
    return report;
}

namespace {

nlohmann::ordered_json key_json(const data::SampleKey& k) { return {k.identity, k.emotion, k.pose}; }

nlohmann::ordered_json curve_json(const RocCurve& c) {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : c.points) {
        pts.push_back({std::isinf(p.threshold) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(p.threshold),
                       p.fpr, p.tpr});
    }
    return {{"label", c.label}, {"auc", c.auc}, {"points", pts}};
}

void check_csv(const std::filesystem::path& path, std::size_t columns, bool numeric_from_first) {
    const csv::Table t = csv::read_table(path);
    if (t.header.size() != columns) throw IoError(path.string() + ": header has wrong column count");
    for (const auto& [line, fields] : t.rows) {
        if (fields.size() != columns) throw IoError(path.string() + ":" + std::to_string(line) + ": ragged row");
        for (std::size_t c = numeric_from_first ? 0 : 1; c < fields.size(); ++c) {
            csv::parse_double(fields[c], t.header[c]);
        }
    }
}

}  // namespace

std::string report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["seed"] = report.seed;
    j["checkpoint"] = report.checkpoint_id;
    j["split"] = {{"train", report.split.train}, {"val", report.split.val}, {"test", report.split.test}};
    j["probe"] = "multinomial logistic regression (linear)";
    j["experiment2_protocol"] = "probe trained and scored within the augmented set, 80/20";
    j["test_samples"] = report.test_samples;
    j["augmentations"] = report.augmentations;
    nlohmann::ordered_json acc;
    for (const auto& r : report.targets) {
        acc[target_name(r.target)] = {{"experiment1", r.accuracy[0]},
                                      {"experiment2", r.accuracy[1]},
                                      {"experiment3", r.accuracy[2]}};
    }
    j["accuracy"] = acc;
    if (report.has_oracle) {
        j["oracle_cosine"] = {{"augmented", report.cosine_augmented},
                              {"base", report.cosine_base},
                              {"gain", report.cosine_augmented - report.cosine_base}};
    }
    nlohmann::ordered_json targets;
    for (const auto& r : report.targets) {
        nlohmann::ordered_json t;
        t["train_size"] = r.train_size;
        t["eval_size"] = r.eval_size;
        nlohmann::ordered_json keys = nlohmann::ordered_json::array();
        for (const auto& k : r.exp1_eval_keys) keys.push_back(key_json(k));
        t["held_out"] = keys;
        t["classes"] = r.classes;
        t["confusion"] = r.confusion;
        t["macro_auc"] = r.roc.macro_auc;
        t["roc_excluded"] = r.roc.excluded;
        t["roc_macro"] = curve_json(r.roc.macro);
        nlohmann::ordered_json per = nlohmann::ordered_json::array();
        for (const auto& c : r.roc.per_class) per.push_back(curve_json(c));
        t["roc_per_class"] = per;
        targets[target_name(r.target)] = t;
    }
    j["targets"] = targets;
    return j.dump(2) + "\n";
}

std::string roc_csv(const RocCurve& curve) {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
        out += csv::format_double(p.threshold) + "," + csv::format_double(p.fpr) + "," + csv::format_double(p.tpr) + "\n";
    }
    return out;
}

std::string confusion_csv(const std::vector<std::string>& classes,
                          const std::vector<std::vector<std::size_t>>& counts) {
    std::string out = "label";
    for (const auto& c : classes) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < counts.size(); ++r) {
        out += classes[r];
        for (auto v : counts[r]) out += "," + std::to_string(v);
        out += "\n";
    }
    return out;
}

ReportFiles write_report(const EvalReport& report, const std::filesystem::path& dir) {
    ReportFiles files;
    files.json = dir / "report.json";
    csv::write_text(files.json, report_json(report));
    for (const auto& r : report.targets) {
        const std::string name = target_name(r.target);
        const auto roc = dir / ("roc_" + name + ".csv");
        csv::write_text(roc, roc_csv(r.roc.macro));
        check_csv(roc, 3, true);
        files.roc.push_back(roc);
        const auto conf = dir / ("confusion_" + name + ".csv");
        csv::write_text(conf, confusion_csv(r.classes, r.confusion));
        check_csv(conf, r.classes.size() + 1, false);
        files.confusion.push_back(conf);
    }
    return files;
}

}  // namespace fra::eval
