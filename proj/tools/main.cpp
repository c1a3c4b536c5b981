#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fra/app.hpp"
#include "fra/error.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2, kVerification = 3 };

struct Overrides {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    // synth / data
    std::size_t identities = 0, emotions = 0, poses = 0, dim = 0;
    double noise = -1.0;
    std::string embeddings, landmarks, factors;
    // train
    std::string profile;
    double lr = 0.0, momentum = -1.0, dropout = -1.0, margin = -1.0;
    std::size_t steps = 0, batch = 0, epochs = 0, pretrain = 0;
    // gradcheck
    double tolerance = 0.0;
    std::size_t coordinates = 0;
    bool gc_dropout = false;
};

fra::config::RunConfig resolve(const Overrides& o, const CLI::App& app) {
    fra::config::RunConfig cfg = o.config.empty() ? fra::config::RunConfig{} : fra::config::load_file(o.config);
    if (!o.profile.empty()) fra::config::apply_profile(cfg, o.profile);
    if (app.count("--seed") > 0) cfg.apply_seed(o.seed);
    if (!o.out.empty()) cfg.out = o.out;
    auto& s = cfg.data.synthetic;
    if (o.identities) s.identities = o.identities;
    if (o.emotions) s.emotions = o.emotions;
    if (o.poses) s.poses = o.poses;
    if (o.dim) {
        s.dim = o.dim;
        cfg.model.combiner.face_dim = o.dim;
    }
    if (o.noise >= 0.0) s.noise_sigma = o.noise;
    if (!o.embeddings.empty()) cfg.data.embeddings = o.embeddings;
    if (!o.landmarks.empty()) cfg.data.landmarks = o.landmarks;
    if (!o.factors.empty()) cfg.data.factors = o.factors;
    if (o.lr > 0.0) cfg.optim.learning_rate = o.lr;
    if (o.momentum >= 0.0) cfg.optim.momentum = o.momentum;
    if (o.dropout >= 0.0) cfg.model.combiner.dropout = o.dropout;
    if (o.margin >= 0.0) cfg.optim.margin = o.margin;
    if (o.steps) {
        cfg.optim.steps = o.steps;
        cfg.epochs = 0;
    }
    if (o.batch) cfg.optim.batch_size = o.batch;
    if (o.epochs) cfg.epochs = o.epochs;
    if (o.pretrain) cfg.pretrain_steps = o.pretrain;
    if (o.tolerance > 0.0) cfg.gradcheck.tolerance = o.tolerance;
    if (o.coordinates) cfg.gradcheck.coordinates = o.coordinates;
    if (o.gc_dropout) cfg.gradcheck.dropout = true;
    return cfg;
}

void add_data_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--embeddings", o.embeddings, "Embedding CSV (default: synthetic data)");
    cmd->add_option("--landmarks", o.landmarks, "Landmark CSV");
    cmd->add_option("--factors", o.factors, "Factor-truth JSON sidecar");
    cmd->add_option("--identities", o.identities, "Synthetic identities");
    cmd->add_option("--emotions", o.emotions, "Synthetic emotions");
    cmd->add_option("--poses", o.poses, "Synthetic poses");
    cmd->add_option("--dim", o.dim, "Embedding length");
    cmd->add_option("--noise", o.noise, "Synthetic noise norm");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face representation augmentation: train, augment and evaluate"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON run configuration");
    app.add_option("--seed", o.seed, "Seed for every random component");
    app.add_option("--out", o.out, "Output directory");

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    add_data_flags(synth, o);

    auto* train = app.add_subcommand("train", "Train the autoencoder and combiner jointly");
    add_data_flags(train, o);
    std::string resume;
    train->add_option("--resume", resume, "Checkpoint to continue from");
    train->add_option("--profile", o.profile, "magface | arcface | cosface");
    train->add_option("--lr", o.lr, "Learning rate");
    train->add_option("--momentum", o.momentum, "SGD momentum");
    train->add_option("--steps", o.steps, "Optimizer steps");
    train->add_option("--epochs", o.epochs, "Epochs (overrides --steps)");
    train->add_option("--batch-size", o.batch, "Batch size");
    train->add_option("--dropout", o.dropout, "Dropout rate");
    train->add_option("--margin", o.margin, "Triplet margin");
    train->add_option("--pretrain-steps", o.pretrain, "Autoencoder steps before joint training");
    bool quiet = false;
    train->add_flag("--quiet", quiet, "No per-step log");

    auto* pretrain = app.add_subcommand("pretrain", "Train the autoencoder alone");
    add_data_flags(pretrain, o);
    pretrain->add_option("--steps", o.pretrain, "Full-batch steps");
    pretrain->add_option("--lr", o.lr, "Learning rate");
    pretrain->add_option("--momentum", o.momentum, "SGD momentum");

    auto* augment = app.add_subcommand("augment", "Move embeddings to other poses");
    add_data_flags(augment, o);
    fra::app::AugmentRequest aug;
    augment->add_option("--checkpoint", aug.checkpoint, "Trained checkpoint")->required();
    augment->add_option("--pose", aug.poses, "Target pose label (repeatable; default all)");
    augment->add_flag("--test-only", aug.test_only, "Only the checkpoint's test identities");

    auto* evaluate = app.add_subcommand("eval", "Run the three-experiment probe protocol");
    add_data_flags(evaluate, o);
    std::string eval_ckpt;
    evaluate->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the training loss");
    add_data_flags(gradcheck, o);
    gradcheck->add_option("--tolerance", o.tolerance, "Maximum relative error");
    gradcheck->add_option("--coordinates", o.coordinates, "Sampled parameter coordinates");
    gradcheck->add_flag("--dropout", o.gc_dropout, "Request dropout (refused)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        fra::config::RunConfig cfg = resolve(o, app);
        if (synth->parsed()) {
            cfg.validate();
            const auto files = fra::app::run_synth(cfg);
            std::cout << "wrote " << files.embeddings.string() << "\n" << files.landmarks.string() << "\n";
            if (!files.factors.empty()) std::cout << files.factors.string() << "\n";
        } else if (train->parsed()) {
            fra::app::TrainOptions opts;
            opts.resume = resume;
            opts.log = quiet ? nullptr : &std::cout;
            const auto r = fra::app::run_train(cfg, opts);
            std::cout << "final checkpoint " << r.final_checkpoint.string() << "\n";
        } else if (pretrain->parsed()) {
            const auto h = fra::app::run_pretrain(cfg, &std::cout);
            std::cout << "final bce " << (h.empty() ? 0.0 : h.back()) << "\n";
        } else if (augment->parsed()) {
            std::cout << "wrote " << fra::app::run_augment(cfg, aug).string() << "\n";
        } else if (evaluate->parsed()) {
            const auto r = fra::app::run_eval(cfg, eval_ckpt);
            for (const auto& t : r.report.targets) {
                std::cout << fra::eval::target_name(t.target) << ": exp1 " << t.accuracy[0] << " exp2 " << t.accuracy[1]
                          << " exp3 " << t.accuracy[2] << "\n";
            }
            if (r.report.has_oracle) {
                std::cout << "oracle cosine: augmented " << r.report.cosine_augmented << " base "
                          << r.report.cosine_base << "\n";
            }
            std::cout << "wrote " << r.files.json.string() << "\n";
        } else if (gradcheck->parsed()) {
            const auto rep = fra::app::run_gradcheck(cfg);
            std::cout << "checked " << rep.checked << " coordinates, max relative error " << rep.max_rel_error
                      << " (" << rep.worst.tensor << "[" << rep.worst.index << "]), tolerance " << rep.tolerance
                      << "\n";
            if (!rep.passed()) {
                for (const auto& f : rep.failures) {
                    std::cout << "  FAIL " << f.tensor << "[" << f.index << "] analytic " << f.analytic << " numeric "
                              << f.numeric << " rel " << f.rel_error << "\n";
                }
                return kVerification;
            }
        }
    } catch (const fra::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const fra::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const fra::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
