#include "fra/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fra/csv.hpp"
#include "fra/error.hpp"
#include "fra/objective.hpp"
#include "fra/rng.hpp"

namespace fra::data {
namespace {

std::vector<double> normalized(std::vector<double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw InputError("embedding has zero or non-finite norm");
    for (double& x : v) x /= norm;
    return v;
}

std::size_t uniform_index(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter, std::size_t n) {
    const auto i = static_cast<std::size_t>(counter_uniform(seed, stream, counter) * static_cast<double>(n));
    return std::min(i, n - 1);
}

std::string padded(const std::string& prefix, std::size_t value, std::size_t count) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(count - 1).size());
    std::string digits = std::to_string(value);
    return prefix + std::string(width - digits.size(), '0') + digits;
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    return normalized(std::move(v));
}

// Canonical frontal template in face-centred coordinates: x right, y down, z toward the viewer.
struct Point3 {
    double x, y, z;
};

struct EmotionShape {
    double smile;  // mouth corners up
    double open;   // mouth opening
    double brow;   // brow raise
};

EmotionShape emotion_shape(std::size_t index) {
    static constexpr EmotionShape kTable[] = {
        {0.00, 0.00, 0.00},   {0.12, 0.04, 0.00},  {-0.08, 0.00, 0.06}, {-0.04, 0.00, -0.08},
        {0.00, 0.18, 0.12},   {-0.02, 0.10, 0.10}, {-0.06, 0.03, -0.05},
    };
    constexpr std::size_t n = std::size(kTable);
    const EmotionShape base = kTable[index % n];
    const double amp = 1.0 + 0.5 * static_cast<double>(index / n);
    return {base.smile * amp, base.open * amp, base.brow * amp};
}

std::vector<Point3> face_template(const EmotionShape& emo, double width, double eye_gap, double nose_len) {
    std::vector<Point3> pts;
    pts.reserve(raster::kLandmarkCount);
    const double pi = std::numbers::pi;
    for (int j = 0; j <= 16; ++j) {  // jaw
        const double a = pi * j / 16.0 - pi / 2.0;
        pts.push_back({0.9 * width * std::sin(a), 0.95 * std::cos(a), -0.5 + 0.7 * std::cos(a)});
    }
    for (int side = -1; side <= 1; side += 2) {  // brows
        for (int j = 0; j < 5; ++j) {
            const double t = j / 4.0;
            const double x = side < 0 ? -0.75 + 0.6 * t : 0.15 + 0.6 * t;
            const double bump = std::sin(pi * t);
            pts.push_back({x * width, -0.45 - 0.08 * bump - emo.brow, 0.3});
        }
    }
    for (int j = 0; j < 4; ++j) {  // nose bridge
        pts.push_back({0.0, -0.3 + (0.4 + nose_len) * j / 3.0, 0.4 + 0.1 * j});
    }
    for (int j = 0; j < 5; ++j) {  // nostrils
        const double x = -0.2 + 0.1 * j;
        pts.push_back({x * width, 0.2 + nose_len, 0.5 + 0.1 * (1.0 - std::abs(x) * 5.0)});
    }
    for (int side = -1; side <= 1; side += 2) {  // eyes
        const double cx = side * (0.4 + eye_gap) * width;
        for (int j = 0; j < 6; ++j) {
            const double a = pi * j / 3.0;
            pts.push_back({cx - 0.15 * std::cos(a), -0.25 - 0.06 * std::sin(a), 0.3});
        }
    }
    const auto mouth = [&](int count, double rx, double ry) {
        for (int j = 0; j < count; ++j) {
            const double a = 2.0 * pi * j / count;
            const double x = -rx * std::cos(a);
            const double corner = std::abs(std::cos(a));
            const double y = 0.55 - (ry + emo.open) * std::sin(a) - emo.smile * corner * corner;
            pts.push_back({x * width, y, 0.35});
        }
    };
    mouth(12, 0.35, 0.12);
    mouth(8, 0.22, 0.05);
    return pts;
}

}  // namespace

std::string SampleKey::str() const { return "(" + identity + ", " + emotion + ", " + pose + ")"; }

std::vector<double> FactorTruth::oracle_target(const SampleKey& key) const {
    const auto u = identity.find(key.identity);
    const auto v = emotion.find(key.emotion);
    const auto w = pose.find(key.pose);
    if (u == identity.end() || v == emotion.end() || w == pose.end()) {
        throw InputError("factor truth has no factors for key " + key.str());
    }
    std::vector<double> t(u->second.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = u->second[k] + alpha * v->second[k] + beta * w->second[k];
    return normalized(std::move(t));
}

void Dataset::insert(SampleKey key, std::vector<double> embedding, raster::LandmarkSet landmarks) {
    if (dim_ == 0) dim_ = embedding.size();
    if (embedding.size() != dim_) {
        throw InputError("embedding for " + key.str() + " has length " + std::to_string(embedding.size()) +
                         ", dataset dimension is " + std::to_string(dim_));
    }
    if (records_.contains(key)) throw InputError("duplicate key " + key.str());
    records_.emplace(std::move(key), Record{normalized(std::move(embedding)), std::move(landmarks)});
}

const Record* Dataset::find(const SampleKey& key) const {
    auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
}

const Record& Dataset::at(const SampleKey& key) const {
    if (const Record* r = find(key)) return *r;
    throw InputError("dataset has no record " + key.str());
}

std::vector<std::string> Dataset::identities() const {
    std::set<std::string> s;
    for (const auto& [k, _] : records_) s.insert(k.identity);
    return {s.begin(), s.end()};
}

std::vector<std::string> Dataset::emotions() const {
    std::set<std::string> s;
    for (const auto& [k, _] : records_) s.insert(k.emotion);
    return {s.begin(), s.end()};
}

std::vector<std::string> Dataset::poses() const {
    std::set<std::string> s;
    for (const auto& [k, _] : records_) s.insert(k.pose);
    return {s.begin(), s.end()};
}

std::vector<SampleKey> Dataset::missing_keys() const {
    std::vector<SampleKey> out;
    for (const auto& i : identities())
        for (const auto& e : emotions())
            for (const auto& p : poses()) {
                SampleKey k{i, e, p};
                if (!contains(k)) out.push_back(std::move(k));
            }
    return out;
}

std::vector<SampleKey> Dataset::keys() const {
    std::vector<SampleKey> out;
    out.reserve(records_.size());
    for (const auto& [k, _] : records_) out.push_back(k);
    return out;
}

Dataset Dataset::subset(std::span<const std::string> identities) const {
    const std::set<std::string> keep(identities.begin(), identities.end());
    Dataset out(dim_);
    for (const auto& [k, r] : records_) {
        if (keep.contains(k.identity)) out.records_.emplace(k, r);
    }
    out.factor_truth_ = factor_truth_;
    return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
    if (a.dim_ != b.dim_ || a.records_.size() != b.records_.size()) return false;
    auto ib = b.records_.begin();
    for (const auto& [k, r] : a.records_) {
        if (k != ib->first || r.embedding != ib->second.embedding || !(r.landmarks == ib->second.landmarks)) {
            return false;
        }
        ++ib;
    }
    return true;
}

raster::LandmarkSet synthetic_landmarks(std::size_t identity_index, std::size_t emotion_index, std::size_t pose_index,
                                        std::size_t n_poses, std::uint64_t seed) {
    const std::uint64_t id_seed = derive_seed(seed, 0x1d00 + identity_index);
    const double width = 1.0 + 0.1 * (counter_uniform(id_seed, 1, 0) - 0.5);
    const double eye_gap = 0.08 * (counter_uniform(id_seed, 1, 1) - 0.5);
    const double nose_len = 0.08 * (counter_uniform(id_seed, 1, 2) - 0.5);
    const auto pts = face_template(emotion_shape(emotion_index), width, eye_gap, nose_len);

    constexpr double kMaxYaw = std::numbers::pi / 3.0;
    const double yaw = n_poses <= 1 ? 0.0
                                    : -kMaxYaw + 2.0 * kMaxYaw * static_cast<double>(pose_index) /
                                                     static_cast<double>(n_poses - 1);
    const double c = std::cos(yaw), s = std::sin(yaw);
    std::vector<raster::Point> out;
    out.reserve(pts.size());
    for (const Point3& p : pts) {
        const double x = p.x * c + p.z * s;
        const double u = std::clamp(0.5 + 0.36 * x, 0.0, 1.0);
        const double v = std::clamp(0.5 + 0.36 * (p.y - 0.2), 0.0, 1.0);
        out.push_back({u, v});
    }
    return raster::LandmarkSet(std::move(out));
}

Dataset generate_synthetic(const SyntheticParams& params) {
    if (params.identities < 2 || params.emotions < 2 || params.poses < 2) {
        throw ConfigError("synthetic dataset needs at least 2 identities, emotions and poses");
    }
    if (params.dim == 0) throw ConfigError("synthetic dataset dimension must be positive");
    if (!(params.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");

    FactorTruth truth;
    truth.alpha = params.alpha;
    truth.beta = params.beta;
    std::vector<std::string> ids, emos, poses;
    {
        std::mt19937_64 rng(derive_seed(params.seed, 0xfac1));
        for (std::size_t i = 0; i < params.identities; ++i) {
            ids.push_back(padded("id", i, params.identities));
            truth.identity[ids.back()] = random_unit(rng, params.dim);
        }
    }
    {
        std::mt19937_64 rng(derive_seed(params.seed, 0xfac2));
        for (std::size_t e = 0; e < params.emotions; ++e) {
            emos.push_back(padded("em", e, params.emotions));
            truth.emotion[emos.back()] = random_unit(rng, params.dim);
        }
    }
    {
        std::mt19937_64 rng(derive_seed(params.seed, 0xfac3));
        for (std::size_t p = 0; p < params.poses; ++p) {
            poses.push_back(padded("p", p, params.poses));
            truth.pose[poses.back()] = random_unit(rng, params.dim);
        }
    }

    Dataset ds(params.dim);
    std::mt19937_64 noise_rng(derive_seed(params.seed, 0x0153));
    std::normal_distribution<double> normal(0.0, params.noise_sigma / std::sqrt(static_cast<double>(params.dim)));
    for (std::size_t i = 0; i < params.identities; ++i) {
        for (std::size_t e = 0; e < params.emotions; ++e) {
            for (std::size_t p = 0; p < params.poses; ++p) {
                const auto& u = truth.identity[ids[i]];
                const auto& v = truth.emotion[emos[e]];
                const auto& w = truth.pose[poses[p]];
                std::vector<double> emb(params.dim);
                for (std::size_t k = 0; k < params.dim; ++k) {
                    const double noise = params.noise_sigma > 0.0 ? normal(noise_rng) : 0.0;
                    emb[k] = u[k] + params.alpha * v[k] + params.beta * w[k] + noise;
                }
                ds.insert({ids[i], emos[e], poses[p]}, std::move(emb),
                          synthetic_landmarks(i, e, p, params.poses, params.seed));
            }
        }
    }
    ds.set_factor_truth(std::move(truth));
    return ds;
}

std::string embeddings_csv(const Dataset& dataset) {
    std::string out = "identity,emotion,pose";
    for (std::size_t k = 0; k < dataset.dim(); ++k) out += ",e" + std::to_string(k);
    out += "\n";
    for (const auto& [key, rec] : dataset.records()) {
        out += key.identity + "," + key.emotion + "," + key.pose;
        for (double v : rec.embedding) out += "," + csv::format_double(v);
        out += "\n";
    }
    return out;
}

std::string landmarks_csv(const Dataset& dataset) {
    std::string out = "identity,emotion,pose";
    for (std::size_t k = 0; k < raster::kLandmarkCount; ++k) {
        out += ",x" + std::to_string(k) + ",y" + std::to_string(k);
    }
    out += "\n";
    for (const auto& [key, rec] : dataset.records()) {
        out += key.identity + "," + key.emotion + "," + key.pose;
        for (const auto& p : rec.landmarks.points()) out += "," + csv::format_double(p.x) + "," + csv::format_double(p.y);
        out += "\n";
    }
    return out;
}

std::string factor_truth_json(const FactorTruth& truth) {
    nlohmann::ordered_json j;
    j["alpha"] = truth.alpha;
    j["beta"] = truth.beta;
    j["identity"] = truth.identity;
    j["emotion"] = truth.emotion;
    j["pose"] = truth.pose;
    return j.dump() + "\n";
}

FactorTruth parse_factor_truth_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        FactorTruth t;
        t.alpha = j.at("alpha").get<double>();
        t.beta = j.at("beta").get<double>();
        t.identity = j.at("identity").get<std::map<std::string, std::vector<double>>>();
        t.emotion = j.at("emotion").get<std::map<std::string, std::vector<double>>>();
        t.pose = j.at("pose").get<std::map<std::string, std::vector<double>>>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("factor truth: ") + e.what());
    }
}

DatasetFiles write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    DatasetFiles files{dir / "embeddings.csv", dir / "landmarks.csv", {}};
    csv::write_text(files.embeddings, embeddings_csv(dataset));
    csv::write_text(files.landmarks, landmarks_csv(dataset));
    if (dataset.factor_truth()) {
        files.factors = dir / "factors.json";
        csv::write_text(files.factors, factor_truth_json(*dataset.factor_truth()));
    }
    return files;
}

namespace {

void check_key_header(const csv::Table& t, const std::string& file) {
    if (t.header.size() < 3 || t.header[0] != "identity" || t.header[1] != "emotion" || t.header[2] != "pose") {
        throw LoadError(file + ": header must start with identity,emotion,pose");
    }
}

SampleKey row_key(const std::vector<std::string>& fields) { return {fields[0], fields[1], fields[2]}; }

}  // namespace

Dataset load_embeddings(const std::filesystem::path& embedding_path, const std::filesystem::path& landmark_path) {
    const std::string emb_name = embedding_path.filename().string();
    const std::string lm_name = landmark_path.filename().string();
    const csv::Table emb = csv::read_table(embedding_path);
    const csv::Table lm = csv::read_table(landmark_path);

    std::map<SampleKey, std::pair<std::size_t, std::vector<double>>> embeddings;
    if (!emb.header.empty() || !emb.rows.empty()) {
        check_key_header(emb, emb_name);
        const std::size_t dim = emb.header.size() - 3;
        if (dim == 0) throw LoadError(emb_name + ": header declares no embedding columns");
        for (const auto& [line, fields] : emb.rows) {
            if (fields.size() != emb.header.size()) {
                throw LoadError(emb_name + ":" + std::to_string(line) + ": ragged row with " +
                                std::to_string(fields.size() - std::min<std::size_t>(3, fields.size())) +
                                " embedding values, header declares " + std::to_string(dim));
            }
            std::vector<double> values(dim);
            try {
                for (std::size_t k = 0; k < dim; ++k) {
                    values[k] = csv::parse_double(fields[3 + k], emb.header[3 + k]);
                }
            } catch (const InputError& e) {
                throw LoadError(emb_name + ":" + std::to_string(line) + ": " + e.what());
            }
            auto key = row_key(fields);
            if (embeddings.contains(key)) {
                throw LoadError(emb_name + ":" + std::to_string(line) + ": duplicate key " + key.str() +
                                " (first seen at line " + std::to_string(embeddings.at(key).first) + ")");
            }
            embeddings.emplace(std::move(key), std::make_pair(line, std::move(values)));
        }
    }

    std::map<SampleKey, std::pair<std::size_t, raster::LandmarkSet>> landmarks;
    if (!lm.header.empty() || !lm.rows.empty()) {
        check_key_header(lm, lm_name);
        const std::size_t expected = 3 + 2 * raster::kLandmarkCount;
        if (lm.header.size() != expected) {
            throw LoadError(lm_name + ": header declares " + std::to_string(lm.header.size() - 3) +
                            " coordinate columns, expected " + std::to_string(2 * raster::kLandmarkCount));
        }
        for (const auto& [line, fields] : lm.rows) {
            if (fields.size() != expected) {
                throw LoadError(lm_name + ":" + std::to_string(line) + ": ragged row with " +
                                std::to_string(fields.size()) + " fields, expected " + std::to_string(expected));
            }
            try {
                std::vector<raster::Point> pts(raster::kLandmarkCount);
                for (std::size_t k = 0; k < raster::kLandmarkCount; ++k) {
                    pts[k].x = csv::parse_double(fields[3 + 2 * k], lm.header[3 + 2 * k]);
                    pts[k].y = csv::parse_double(fields[4 + 2 * k], lm.header[4 + 2 * k]);
                }
                auto key = row_key(fields);
                if (landmarks.contains(key)) {
                    throw LoadError(lm_name + ":" + std::to_string(line) + ": duplicate key " + key.str());
                }
                landmarks.emplace(std::move(key), std::make_pair(line, raster::LandmarkSet(std::move(pts))));
            } catch (const InputError& e) {
                throw LoadError(lm_name + ":" + std::to_string(line) + ": " + e.what());
            }
        }
    }

    std::string unjoined;
    std::size_t unjoined_count = 0;
    const auto note = [&](const SampleKey& k, const std::string& file, std::size_t line) {
        if (unjoined_count++ < 20) unjoined += "\n  " + k.str() + " (" + file + ":" + std::to_string(line) + ")";
    };
    for (const auto& [k, v] : embeddings) {
        if (!landmarks.contains(k)) note(k, emb_name, v.first);
    }
    for (const auto& [k, v] : landmarks) {
        if (!embeddings.contains(k)) note(k, lm_name, v.first);
    }
    if (unjoined_count > 0) {
        throw LoadError(std::to_string(unjoined_count) + " unjoinable keys between " + emb_name + " and " + lm_name +
                        ":" + unjoined);
    }
    if (embeddings.empty()) throw LoadError(emb_name + ": no records");

    Dataset ds(emb.header.size() - 3);
    for (auto& [k, v] : embeddings) {
        try {
            ds.insert(k, std::move(v.second), landmarks.at(k).second);
        } catch (const InputError& e) {
            throw LoadError(emb_name + ":" + std::to_string(v.first) + ": " + e.what());
        }
    }
    return ds;
}

std::array<std::size_t, 3> proportional_split_counts(std::size_t n) {
    if (n < 3) throw ConfigError("identity split needs at least 3 identities, got " + std::to_string(n));
    auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 11.0 / 140.0));
    auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 30.0 / 140.0));
    val = std::max<std::size_t>(val, 1);
    test = std::max<std::size_t>(test, 1);
    return {n - val - test, val, test};
}

SplitSpec split_by_identity(const Dataset& dataset, std::array<std::size_t, 3> counts, std::uint64_t seed) {
    std::vector<std::string> ids = dataset.identities();
    const std::size_t total = counts[0] + counts[1] + counts[2];
    if (total != ids.size()) {
        throw ConfigError("split counts " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                          std::to_string(counts[2]) + " sum to " + std::to_string(total) + ", dataset has " +
                          std::to_string(ids.size()) + " identities");
    }
    // Fisher-Yates driven by the counter-based generator.
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::swap(ids[i - 1], ids[uniform_index(seed, 0x5b17, i, i)]);
    }
    SplitSpec s;
    s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(counts[0]));
    s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(counts[0]),
                 ids.begin() + static_cast<std::ptrdiff_t>(counts[0] + counts[1]));
    s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(counts[0] + counts[1]), ids.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Batch make_batch(const Dataset& dataset, const SplitSpec& split, std::size_t batch_size, std::uint64_t seed) {
    if (split.train.empty()) throw ConfigError("make_batch: split has no training identities");
    return make_batch(dataset.subset(split.train), batch_size, seed);
}

Batch make_batch(const Dataset& pool, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("make_batch: batch_size must be at least 1");
    if (pool.empty()) throw ConfigError("make_batch: no records to draw from");
    const std::vector<SampleKey> keys = pool.keys();
    const std::vector<std::string> poses = pool.poses();
    Batch batch;
    const std::size_t max_draws = 20 * batch_size;
    for (std::size_t draw = 0; batch.items.size() < batch_size && draw < max_draws; ++draw) {
        const SampleKey& base = keys[uniform_index(seed, 0xba5e, draw, keys.size())];
        std::vector<const std::string*> targets;
        for (const auto& p : poses) {
            if (p != base.pose && pool.contains({base.identity, base.emotion, p})) targets.push_back(&p);
        }
        if (targets.empty()) {
            ++batch.skipped;
            continue;
        }
        const std::string& target = *targets[uniform_index(seed, 0x7a26, draw, targets.size())];
        try {
            BatchItem item;
            item.base = base;
            item.positive = {base.identity, base.emotion, target};
            item.negatives = objective::sample_negatives(pool, base, target, derive_seed(seed, draw));
            batch.items.push_back(std::move(item));
        } catch (const SamplingError&) {
            ++batch.skipped;
        }
    }
    return batch;
}

}  // namespace fra::data
