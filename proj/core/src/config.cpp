#include "fra/config.hpp"

#include <cmath>
#include <exception>
#include <set>

#include <json.hpp>

#include "fra/csv.hpp"
#include "fra/error.hpp"
#include "fra/rng.hpp"

namespace fra::config {

using nlohmann::json;

void RunConfig::validate() const {
    if (!profile.empty() && profile != "magface" && profile != "arcface" && profile != "cosface") {
        throw ConfigError("profile: unknown profile '" + profile + "' (magface, arcface, cosface)");
    }
    if (data.embeddings.empty() != data.landmarks.empty()) {
        throw ConfigError("data: embeddings and landmarks must be given together");
    }
    if (data.synthetic_source()) {
        const auto& s = data.synthetic;
        if (s.identities < 2) throw ConfigError("data.synthetic.identities must be >= 2");
        if (s.emotions < 2) throw ConfigError("data.synthetic.emotions must be >= 2");
        if (s.poses < 2) throw ConfigError("data.synthetic.poses must be >= 2");
        if (s.dim == 0) throw ConfigError("data.synthetic.dim must be >= 1");
        if (!(s.noise_sigma >= 0.0)) throw ConfigError("data.synthetic.noise_sigma must be >= 0");
        if (s.dim != model.combiner.face_dim) {
            throw ConfigError("data.synthetic.dim (" + std::to_string(s.dim) + ") must equal model.face_dim (" +
                              std::to_string(model.combiner.face_dim) + ")");
        }
    }
    model.validate();
    optim.validate();
    if (!(optim.learning_rate > 0.0)) throw ConfigError("optim.lr must be positive");
    if (!(gradcheck.step > 0.0)) throw ConfigError("gradcheck.step must be positive");
    if (!(gradcheck.tolerance > 0.0)) throw ConfigError("gradcheck.tolerance must be positive");
    if (!(gradcheck.floor > 0.0)) throw ConfigError("gradcheck.floor must be positive");
    if (gradcheck.batch == 0) throw ConfigError("gradcheck.batch must be >= 1");
    eval.validate();
    if (out.empty()) throw ConfigError("out must be a directory path");
}

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    data.synthetic.seed = derive_seed(s, 1);
    optim.seed = derive_seed(s, 2);
    eval.seed = derive_seed(s, 3);
}

void apply_profile(RunConfig& cfg, const std::string& name) {
    if (name == "magface") {
        cfg.epochs = 255;
        cfg.model.combiner.dropout = 0.4;
    } else if (name == "arcface") {
        cfg.epochs = 320;
        cfg.model.combiner.dropout = 0.4;
    } else if (name == "cosface") {
        cfg.epochs = 157;
        cfg.model.combiner.dropout = 0.05;
    } else if (!name.empty()) {
        throw ConfigError("profile: unknown profile '" + name + "' (magface, arcface, cosface)");
    }
    cfg.profile = name;
}

namespace {

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.contains(k)) throw ConfigError(where(k) + ": unknown field");
        }
    }

    template <class T>
    void get(const char* key, T& target) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            target = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + ": wrong type (got " + j_.at(key).dump() + ")");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.at(key), where(key));
    }

    std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    Section root(j, "");
    std::string profile;
    root.get("profile", profile);
    apply_profile(cfg, profile);
    std::uint64_t seed = 0;
    root.get("seed", seed);
    cfg.apply_seed(seed);
    root.get("out", cfg.out);
    root.get("epochs", cfg.epochs);
    root.get("pretrain_steps", cfg.pretrain_steps);
    if (root.has("data")) {
        Section d = root.sub("data");
        d.get("embeddings", cfg.data.embeddings);
        d.get("landmarks", cfg.data.landmarks);
        d.get("factors", cfg.data.factors);
        if (d.has("synthetic")) {
            Section s = d.sub("synthetic");
            s.get("identities", cfg.data.synthetic.identities);
            s.get("emotions", cfg.data.synthetic.emotions);
            s.get("poses", cfg.data.synthetic.poses);
            s.get("dim", cfg.data.synthetic.dim);
            s.get("noise_sigma", cfg.data.synthetic.noise_sigma);
            s.get("alpha", cfg.data.synthetic.alpha);
            s.get("beta", cfg.data.synthetic.beta);
            s.get("seed", cfg.data.synthetic.seed);
        }
    }
    if (root.has("image")) {
        Section s = root.sub("image");
        s.get("size", cfg.model.autoencoder.image_size);
        s.get("radius", cfg.model.raster_radius);
    }
    if (root.has("model")) {
        Section s = root.sub("model");
        auto& c = cfg.model.combiner;
        s.get("face_dim", c.face_dim);
        s.get("pose_dim", c.pose_dim);
        cfg.model.autoencoder.latent_dim = c.pose_dim;
        s.get("channels", cfg.model.autoencoder.channels);
        s.get("patch", c.patch);
        s.get("model_dim", c.model_dim);
        s.get("ff_dim", c.ff_dim);
        s.get("heads", c.heads);
        s.get("layers", c.layers);
        s.get("dropout", c.dropout);
        s.get("positional", c.positional);
        s.get("face_skip", c.face_skip);
    }
    if (root.has("optim")) {
        Section s = root.sub("optim");
        s.get("lr", cfg.optim.learning_rate);
        s.get("momentum", cfg.optim.momentum);
        s.get("steps", cfg.optim.steps);
        s.get("batch_size", cfg.optim.batch_size);
        s.get("val_every", cfg.optim.val_every);
        s.get("val_batch", cfg.optim.val_batch);
        s.get("seed", cfg.optim.seed);
    }
    if (root.has("loss")) {
        Section s = root.sub("loss");
        s.get("margin", cfg.optim.margin);
    }
    if (root.has("split")) {
        Section s = root.sub("split");
        std::vector<std::size_t> counts;
        s.get("counts", counts);
        if (!counts.empty()) {
            if (counts.size() != 3) throw ConfigError("split.counts must have 3 entries (train, val, test)");
            cfg.split.counts = {counts[0], counts[1], counts[2]};
        }
    }
    if (root.has("eval")) {
        Section s = root.sub("eval");
        s.get("l2", cfg.eval.probe.l2_penalty);
        s.get("max_steps", cfg.eval.probe.max_steps);
        s.get("grad_tolerance", cfg.eval.probe.grad_tolerance);
        s.get("holdout", cfg.eval.holdout);
        s.get("seed", cfg.eval.seed);
    }
    if (root.has("gradcheck")) {
        Section s = root.sub("gradcheck");
        s.get("coordinates", cfg.gradcheck.coordinates);
        s.get("step", cfg.gradcheck.step);
        s.get("tolerance", cfg.gradcheck.tolerance);
        s.get("floor", cfg.gradcheck.floor);
        s.get("batch", cfg.gradcheck.batch);
        s.get("dropout", cfg.gradcheck.dropout);
    }
    return cfg;
}

RunConfig load_file(const std::string& path) {
    std::string text;
    try {
        text = csv::read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return from_json(text);
}

std::string to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["profile"] = cfg.profile;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["epochs"] = cfg.epochs;
    j["pretrain_steps"] = cfg.pretrain_steps;
    const auto& s = cfg.data.synthetic;
    j["data"] = {{"embeddings", cfg.data.embeddings},
                 {"landmarks", cfg.data.landmarks},
                 {"factors", cfg.data.factors},
                 {"synthetic",
                  {{"identities", s.identities},
                   {"emotions", s.emotions},
                   {"poses", s.poses},
                   {"dim", s.dim},
                   {"noise_sigma", s.noise_sigma},
                   {"alpha", s.alpha},
                   {"beta", s.beta},
                   {"seed", s.seed}}}};
    j["image"] = {{"size", cfg.model.autoencoder.image_size}, {"radius", cfg.model.raster_radius}};
    const auto& c = cfg.model.combiner;
    j["model"] = {{"face_dim", c.face_dim},   {"pose_dim", c.pose_dim},
                  {"channels", cfg.model.autoencoder.channels},
                  {"patch", c.patch},         {"model_dim", c.model_dim},
                  {"ff_dim", c.ff_dim},       {"heads", c.heads},
                  {"layers", c.layers},       {"dropout", c.dropout},
                  {"positional", c.positional}, {"face_skip", c.face_skip}};
    j["optim"] = {{"lr", cfg.optim.learning_rate},      {"momentum", cfg.optim.momentum},
                  {"steps", cfg.optim.steps},            {"batch_size", cfg.optim.batch_size},
                  {"val_every", cfg.optim.val_every},    {"val_batch", cfg.optim.val_batch},
                  {"seed", cfg.optim.seed}};
    j["loss"] = {{"margin", cfg.optim.margin}};
    j["split"] = {{"counts", cfg.split.proportional() ? std::vector<std::size_t>{}
                                                      : std::vector<std::size_t>(cfg.split.counts.begin(),
                                                                                 cfg.split.counts.end())}};
    j["eval"] = {{"l2", cfg.eval.probe.l2_penalty},
                 {"max_steps", cfg.eval.probe.max_steps},
                 {"grad_tolerance", cfg.eval.probe.grad_tolerance},
                 {"holdout", cfg.eval.holdout},
                 {"seed", cfg.eval.seed}};
    j["gradcheck"] = {{"coordinates", cfg.gradcheck.coordinates},
                      {"step", cfg.gradcheck.step},
                      {"tolerance", cfg.gradcheck.tolerance},
                      {"floor", cfg.gradcheck.floor},
                      {"batch", cfg.gradcheck.batch},
                      {"dropout", cfg.gradcheck.dropout}};
    return j.dump(2) + "\n";
}

}  // namespace fra::config
