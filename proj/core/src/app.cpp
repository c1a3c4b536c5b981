#include "fra/app.hpp"

#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

#include "fra/csv.hpp"
#include "fra/error.hpp"
#include "fra/rng.hpp"
#include "fra/svg.hpp"

namespace fra::app {

namespace fs = std::filesystem;

data::Dataset load_dataset(const config::RunConfig& cfg) {
    if (cfg.data.synthetic_source()) return data::generate_synthetic(cfg.data.synthetic);
    data::Dataset ds = data::load_embeddings(cfg.data.embeddings, cfg.data.landmarks);
    if (!cfg.data.factors.empty()) {
        try {
            ds.set_factor_truth(data::parse_factor_truth_json(csv::read_text(cfg.data.factors)));
        } catch (const IoError& e) {
            throw LoadError(e.what());
        }
    }
    return ds;
}

data::SplitSpec make_split(const data::Dataset& dataset, const config::RunConfig& cfg) {
    const auto counts = cfg.split.proportional() ? data::proportional_split_counts(dataset.identities().size())
                                                 : cfg.split.counts;
    return data::split_by_identity(dataset, counts, derive_seed(cfg.seed, 4));
}

data::DatasetFiles run_synth(const config::RunConfig& cfg) {
    if (!cfg.data.synthetic_source()) throw ConfigError("synth: data.embeddings/landmarks must be empty");
    return data::write_dataset(data::generate_synthetic(cfg.data.synthetic), cfg.out);
}

namespace {

nlohmann::ordered_json split_json(const data::SplitSpec& s) {
    return {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

std::string loss_csv_text(const std::vector<objective::LossBreakdown>& history) {
    std::string out = "step,bce,triplet_pose,triplet_identity,triplet_emotion,total\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        out += std::to_string(i) + "," + csv::format_double(h.bce) + "," + csv::format_double(h.triplet_pose) + "," +
               csv::format_double(h.triplet_identity) + "," + csv::format_double(h.triplet_emotion) + "," +
               csv::format_double(h.total) + "\n";
    }
    return out;
}

void validate_csv(const fs::path& path, std::size_t numeric_from) {
    const csv::Table t = csv::read_table(path);
    for (const auto& [line, fields] : t.rows) {
        if (fields.size() != t.header.size()) {
            throw IoError(path.string() + ":" + std::to_string(line) + ": row does not match header");
        }
        for (std::size_t c = numeric_from; c < fields.size(); ++c) csv::parse_double(fields[c], t.header[c]);
    }
}

std::string loss_svg(const std::vector<objective::LossBreakdown>& history,
                     const std::vector<std::pair<std::size_t, double>>& val) {
    svg::LinePlot plot{"Training loss", "step", "loss", {}, false};
    svg::Series total{"total", {}, {}}, bce{"bce", {}, {}}, tp{"triplet pose", {}, {}}, ti{"triplet identity", {}, {}},
        te{"triplet emotion", {}, {}};
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto x = static_cast<double>(i);
        total.x.push_back(x), total.y.push_back(history[i].total);
        bce.x.push_back(x), bce.y.push_back(history[i].bce);
        tp.x.push_back(x), tp.y.push_back(history[i].triplet_pose);
        ti.x.push_back(x), ti.y.push_back(history[i].triplet_identity);
        te.x.push_back(x), te.y.push_back(history[i].triplet_emotion);
    }
    plot.series = {total, bce, tp, ti, te};
    if (!val.empty()) {
        svg::Series v{"validation total", {}, {}};
        for (const auto& [s, l] : val) v.x.push_back(static_cast<double>(s)), v.y.push_back(l);
        plot.series.push_back(v);
    }
    return svg::line_plot(plot);
}

void store_optimizer(ckpt::Checkpoint& c, const train::Sgd& sgd, const FraModel& model) {
    std::map<std::string, Shape> shapes;
    for (const auto& p : model.parameters()) shapes[p.name] = p.tensor->shape();
    for (const auto& [name, v] : sgd.velocity()) {
        c.tensors.insert_or_assign(ckpt::kVelocityPrefix + name, Tensor(shapes.at(name), v));
    }
}

void restore_optimizer(const ckpt::Checkpoint& c, train::Sgd& sgd) {
    const std::string prefix = ckpt::kVelocityPrefix;
    for (const auto& [name, t] : c.tensors) {
        if (name.rfind(prefix, 0) == 0) {
            sgd.velocity()[name.substr(prefix.size())] = std::vector<double>(t.values().begin(), t.values().end());
        }
    }
}

}  // namespace

FraModel model_from_checkpoint(const ckpt::Checkpoint& c) {
    const config::RunConfig saved = config::from_json(c.config_json);
    FraModel model(saved.model, 0);
    ckpt::restore_model(c, model);
    return model;
}

data::SplitSpec split_from_checkpoint(const ckpt::Checkpoint& c) {
    try {
        const auto j = nlohmann::json::parse(c.metadata_json).at("split");
        data::SplitSpec s;
        s.train = j.at("train").get<std::vector<std::string>>();
        s.val = j.at("val").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint metadata has no usable split: ") + e.what());
    }
}

TrainResult run_train(const config::RunConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    const data::Dataset dataset = load_dataset(cfg);
    if (dataset.dim() != cfg.model.combiner.face_dim) {
        throw ConfigError("dataset embedding length " + std::to_string(dataset.dim()) + " does not match model.face_dim " +
                          std::to_string(cfg.model.combiner.face_dim));
    }
    data::SplitSpec split = make_split(dataset, cfg);
    FraModel model(cfg.model, derive_seed(cfg.seed, 5));
    std::vector<objective::LossBreakdown> history;
    std::vector<std::pair<std::size_t, double>> val_history;
    std::optional<double> best_val;
    std::size_t start = 0;
    ckpt::Checkpoint resumed;
    if (!options.resume.empty()) {
        resumed = ckpt::load(options.resume);
        ckpt::restore_model(resumed, model);
        split = split_from_checkpoint(resumed);
        history = resumed.history;
        start = resumed.step;
        const auto meta = nlohmann::json::parse(resumed.metadata_json);
        if (meta.contains("val_history")) {
            val_history = meta["val_history"].get<std::vector<std::pair<std::size_t, double>>>();
        }
        if (meta.contains("best_val") && !meta["best_val"].is_null()) best_val = meta["best_val"].get<double>();
    } else if (cfg.pretrain_steps > 0) {
        ImageCache images(dataset, cfg.model.autoencoder.image_size, cfg.model.raster_radius);
        std::vector<Tensor> batch;
        for (const auto& [k, _] : dataset.subset(split.train).records()) batch.push_back(images.tensor(k));
        train::pretrain_autoencoder(model.autoencoder, batch, cfg.pretrain_steps, cfg.optim.learning_rate,
                                    cfg.optim.momentum);
    }

    train::Trainer trainer(model, dataset, split, cfg.optim);
    trainer.set_steps_done(start);
    if (!options.resume.empty()) restore_optimizer(resumed, trainer.optimizer());

    std::size_t total = cfg.optim.steps;
    if (cfg.epochs > 0) {
        const std::size_t n_train = dataset.subset(split.train).size();
        total = cfg.epochs * ((n_train + cfg.optim.batch_size - 1) / cfg.optim.batch_size);
    }
    const std::size_t stop = options.max_steps > 0 ? std::min(total, start + options.max_steps) : total;

    const fs::path out = cfg.out;
    TrainResult result;
    result.total_steps = total;
    result.final_checkpoint = out / "final.ckpt";
    result.best_checkpoint = out / "best.ckpt";
    result.loss_csv = out / "loss.csv";
    result.loss_svg = out / "loss.svg";

    const auto snapshot = [&](std::size_t step) {
        ckpt::Checkpoint c;
        c.config_json = config::to_json(cfg);
        nlohmann::ordered_json meta;
        meta["split"] = split_json(split);
        meta["val_history"] = val_history;
        meta["best_val"] = best_val ? nlohmann::ordered_json(*best_val) : nlohmann::ordered_json();
        c.metadata_json = meta.dump();
        c.step = step;
        c.history = history;
        ckpt::store_model(c, model);
        store_optimizer(c, trainer.optimizer(), model);
        return c;
    };

    bool best_written = false;
    while (trainer.steps_done() < stop) {
        train::StepRecord rec = trainer.step();
        history.push_back(rec.loss);
        if (options.log) {
            *options.log << "step " << rec.step << " total " << rec.loss.total << " bce " << rec.loss.bce;
            if (rec.val_total) *options.log << " val " << *rec.val_total;
            *options.log << "\n";
        }
        if (rec.val_total) {
            val_history.emplace_back(trainer.steps_done(), *rec.val_total);
            if (!best_val || *rec.val_total < *best_val) {
                best_val = rec.val_total;
                ckpt::save(snapshot(trainer.steps_done()), result.best_checkpoint);
                best_written = true;
            }
        }
        result.steps.push_back(std::move(rec));
    }
    const ckpt::Checkpoint final_ckpt = snapshot(trainer.steps_done());
    ckpt::save(final_ckpt, result.final_checkpoint);
    if (!best_written && !fs::exists(result.best_checkpoint)) ckpt::save(final_ckpt, result.best_checkpoint);
    result.best_val = best_val;

    csv::write_text(result.loss_csv, loss_csv_text(history));
    validate_csv(result.loss_csv, 0);
    std::string val_csv = "step,val_total\n";
    for (const auto& [s, v] : val_history) val_csv += std::to_string(s) + "," + csv::format_double(v) + "\n";
    csv::write_text(out / "val_loss.csv", val_csv);
    validate_csv(out / "val_loss.csv", 0);
    csv::write_text(result.loss_svg, loss_svg(history, val_history));
    return result;
}

std::vector<double> run_pretrain(const config::RunConfig& cfg, std::ostream* log) {
    cfg.validate();
    const data::Dataset dataset = load_dataset(cfg);
    const data::SplitSpec split = make_split(dataset, cfg);
    FraModel model(cfg.model, derive_seed(cfg.seed, 5));
    ImageCache images(dataset, cfg.model.autoencoder.image_size, cfg.model.raster_radius);
    std::vector<Tensor> batch;
    for (const auto& [k, _] : dataset.subset(split.train).records()) batch.push_back(images.tensor(k));
    const std::size_t steps = cfg.pretrain_steps > 0 ? cfg.pretrain_steps : cfg.optim.steps;
    const auto history =
        train::pretrain_autoencoder(model.autoencoder, batch, steps, cfg.optim.learning_rate, cfg.optim.momentum);
    std::string text = "step,bce\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        text += std::to_string(i) + "," + csv::format_double(history[i]) + "\n";
        if (log && (i % 10 == 0 || i + 1 == history.size())) *log << "step " << i << " bce " << history[i] << "\n";
    }
    const fs::path out = cfg.out;
    csv::write_text(out / "pretrain_bce.csv", text);
    ckpt::Checkpoint c;
    c.config_json = config::to_json(cfg);
    c.metadata_json = nlohmann::ordered_json{{"split", split_json(split)}, {"kind", "autoencoder"}}.dump();
    c.step = steps;
    ckpt::store_model(c, model);
    ckpt::save(c, out / "autoencoder.ckpt");
    return history;
}

fs::path run_augment(const config::RunConfig& cfg, const AugmentRequest& request) {
    const ckpt::Checkpoint c = ckpt::load(request.checkpoint);
    const FraModel model = model_from_checkpoint(c);
    const data::Dataset full = load_dataset(cfg);
    if (full.dim() != model.config.combiner.face_dim) {
        throw ConfigError("dataset embedding length " + std::to_string(full.dim()) + " does not match checkpoint face_dim " +
                          std::to_string(model.config.combiner.face_dim));
    }
    const data::Dataset samples = request.test_only ? full.subset(split_from_checkpoint(c).test) : full;
    const auto known = full.poses();
    std::vector<std::string> poses = request.poses.empty() ? known : request.poses;
    for (const auto& p : poses) {
        if (std::find(known.begin(), known.end(), p) == known.end()) {
            std::string list;
            for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
            throw InputError("unknown pose label '" + p + "'; known poses: " + list);
        }
    }
    ImageCache images(full, model.config.autoencoder.image_size, model.config.raster_radius);
    const auto source_of = [&](const data::SampleKey& base, const std::string& pose) -> data::SampleKey {
        data::SampleKey same{base.identity, base.emotion, pose};
        if (full.contains(same)) return same;
        for (const auto& [k, _] : full.records()) {
            if (k.identity == base.identity && k.pose == pose) return k;
        }
        for (const auto& [k, _] : full.records()) {
            if (k.pose == pose) return k;
        }
        throw InputError("no landmarks for pose " + pose);
    };
    std::string text = "identity,emotion,pose,base_pose,self";
    for (std::size_t k = 0; k < full.dim(); ++k) text += ",e" + std::to_string(k);
    text += "\n";
    for (const auto& [key, rec] : samples.records()) {
        for (const auto& p : poses) {
            const auto v = model.augment(rec.embedding, images.image(source_of(key, p)));
            text += key.identity + "," + key.emotion + "," + p + "," + key.pose + "," + (p == key.pose ? "1" : "0");
            for (double x : v) text += "," + csv::format_double(x);
            text += "\n";
        }
    }
    const fs::path path = fs::path(cfg.out) / "augmented.csv";
    csv::write_text(path, text);
    validate_csv(path, 4);
    return path;
}

EvalOutputs run_eval(const config::RunConfig& cfg, const std::string& checkpoint) {
    cfg.eval.validate();
    const std::string bytes = [&] {
        try {
            return csv::read_text(checkpoint);
        } catch (const IoError& e) {
            throw LoadError(e.what());
        }
    }();
    const ckpt::Checkpoint c = ckpt::deserialize(bytes, checkpoint);
    const FraModel model = model_from_checkpoint(c);
    const data::Dataset dataset = load_dataset(cfg);
    const data::SplitSpec split = split_from_checkpoint(c);
    EvalOutputs out;
    out.report = eval::run_protocol(dataset, split, model, cfg.eval, ckpt::content_id(bytes));
    const fs::path dir = cfg.out;
    out.files = eval::write_report(out.report, dir);

    std::vector<std::pair<std::size_t, double>> val;
    try {
        const auto meta = nlohmann::json::parse(c.metadata_json);
        if (meta.contains("val_history")) val = meta["val_history"].get<std::vector<std::pair<std::size_t, double>>>();
    } catch (const nlohmann::json::exception&) {
    }
    if (!c.history.empty()) {
        csv::write_text(dir / "loss.svg", loss_svg(c.history, val));
        out.plots.push_back(dir / "loss.svg");
    }
    for (const auto& r : out.report.targets) {
        const std::string name = eval::target_name(r.target);
        svg::LinePlot plot{"ROC (" + name + ", macro AUC " + csv::format_double(std::round(r.roc.macro_auc * 1000) / 1000) + ")",
                           "false positive rate", "true positive rate", {}, true};
        svg::Series macro{"macro", {}, {}};
        for (const auto& p : r.roc.macro.points) macro.x.push_back(p.fpr), macro.y.push_back(p.tpr);
        plot.series.push_back(macro);
        for (const auto& curve : r.roc.per_class) {
            if (plot.series.size() >= 7) break;
            svg::Series s{curve.label, {}, {}};
            for (const auto& p : curve.points) s.x.push_back(p.fpr), s.y.push_back(p.tpr);
            plot.series.push_back(s);
        }
        csv::write_text(dir / ("roc_" + name + ".svg"), svg::line_plot(plot));
        csv::write_text(dir / ("confusion_" + name + ".svg"),
                        svg::heatmap("Confusion (" + name + ")", r.classes, r.confusion));
        out.plots.push_back(dir / ("roc_" + name + ".svg"));
        out.plots.push_back(dir / ("confusion_" + name + ".svg"));
    }
    return out;
}

ad::CheckReport run_gradcheck(const config::RunConfig& cfg) {
    if (cfg.gradcheck.dropout) {
        throw ConfigError("gradcheck.dropout: finite differences need a deterministic loss; dropout must be off");
    }
    cfg.validate();
    const data::Dataset dataset = load_dataset(cfg);
    const data::SplitSpec split = make_split(dataset, cfg);
    FraModel model(cfg.model, derive_seed(cfg.seed, 5));
    ImageCache images(dataset, cfg.model.autoencoder.image_size, cfg.model.raster_radius);
    const data::Batch batch = data::make_batch(dataset, split, cfg.gradcheck.batch, derive_seed(cfg.seed, 6));
    if (batch.items.empty()) throw ComputeError("gradcheck: no usable batch items");
    const auto params = model.parameters();
    ad::CheckOptions opts;
    opts.step = cfg.gradcheck.step;
    opts.tolerance = cfg.gradcheck.tolerance;
    opts.denominator_floor = cfg.gradcheck.floor;
    opts.max_coordinates = cfg.gradcheck.coordinates;
    opts.seed = derive_seed(cfg.seed, 7);
    return ad::finite_diff_check(
        [&](ad::Tape& tape) {
            return train::batch_loss(tape, model, dataset, images, batch, cfg.optim.margin, false, 0).total;
        },
        params, opts);
}

}  // namespace fra::app
