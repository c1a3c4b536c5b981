#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fra/landmarks.hpp"

namespace fra::data {

/// (identity, emotion, pose) triple identifying one face record. Labels are
/// opaque strings.
struct SampleKey {
    std::string identity;
    std::string emotion;
    std::string pose;

    auto operator<=>(const SampleKey&) const = default;
    std::string str() const;
};

struct Record {
    std::vector<double> embedding;  ///< unit L2 norm
    raster::LandmarkSet landmarks;
};

/// Ground-truth factors of a synthetic dataset:
/// embedding(i, e, p) = normalize(u_i + alpha * v_e + beta * w_p + noise).
struct FactorTruth {
    double alpha = 0.5;
    double beta = 0.5;
    std::map<std::string, std::vector<double>> identity;
    std::map<std::string, std::vector<double>> emotion;
    std::map<std::string, std::vector<double>> pose;

    /// Noise-free normalize(u_i + alpha v_e + beta w_p) for any key whose labels are known.
    std::vector<double> oracle_target(const SampleKey& key) const;
};

/// Immutable-after-construction collection of face records.
class Dataset {
public:
    explicit Dataset(std::size_t dim = 0) : dim_(dim) {}

    /// Unit-normalizes the embedding. Throws InputError on a duplicate key,
    /// a length mismatch or a zero/non-finite embedding.
    void insert(SampleKey key, std::vector<double> embedding, raster::LandmarkSet landmarks);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const std::map<SampleKey, Record>& records() const noexcept { return records_; }
    const Record* find(const SampleKey& key) const;
    const Record& at(const SampleKey& key) const;
    bool contains(const SampleKey& key) const { return find(key) != nullptr; }

    std::vector<std::string> identities() const;
    std::vector<std::string> emotions() const;
    std::vector<std::string> poses() const;
    /// Grid cells of identities x emotions x poses with no record.
    std::vector<SampleKey> missing_keys() const;

    /// All keys in sorted order (identity-major).
    std::vector<SampleKey> keys() const;

    /// Records whose identity is in `identities`; factor truth is carried over.
    Dataset subset(std::span<const std::string> identities) const;

    const std::optional<FactorTruth>& factor_truth() const noexcept { return factor_truth_; }
    void set_factor_truth(FactorTruth truth) { factor_truth_ = std::move(truth); }

    friend bool operator==(const Dataset& a, const Dataset& b);

private:
    std::size_t dim_;
    std::map<SampleKey, Record> records_;
    std::optional<FactorTruth> factor_truth_;
};

struct SyntheticParams {
    std::size_t identities = 20;
    std::size_t emotions = 4;
    std::size_t poses = 4;
    std::size_t dim = 512;
    /// Expected L2 norm of the additive Gaussian noise.
    double noise_sigma = 0.1;
    double alpha = 0.5;
    double beta = 0.5;
    std::uint64_t seed = 0;
};

/// Factor-structured stand-in for a multi-pose, multi-emotion face corpus,
/// with landmark sets derived from a canonical 68-point template.
Dataset generate_synthetic(const SyntheticParams& params);

/// Canonical template under a yaw rotation, emotion deformation and
/// per-identity shape jitter; used by the generator and exposed for tests.
raster::LandmarkSet synthetic_landmarks(std::size_t identity_index, std::size_t emotion_index, std::size_t pose_index,
                                        std::size_t n_poses, std::uint64_t seed);

std::string embeddings_csv(const Dataset& dataset);
std::string landmarks_csv(const Dataset& dataset);
std::string factor_truth_json(const FactorTruth& truth);
FactorTruth parse_factor_truth_json(const std::string& text);

struct DatasetFiles {
    std::filesystem::path embeddings;
    std::filesystem::path landmarks;
    std::filesystem::path factors;  ///< empty when the dataset has no factor truth
};

/// Writes embeddings.csv, landmarks.csv and (when present) factors.json under dir.
DatasetFiles write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Joins the embedding and landmark CSVs on (identity, emotion, pose).
/// Throws LoadError (with line numbers) on ragged rows, duplicate or
/// unjoinable keys.
Dataset load_embeddings(const std::filesystem::path& embedding_path, const std::filesystem::path& landmark_path);

struct SplitSpec {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Identity counts proportional to the 99/11/30 reference split of 140
/// identities, rounded, with train taking the remainder.
std::array<std::size_t, 3> proportional_split_counts(std::size_t n_identities);

/// Seeded uniform partition of the dataset's identities into
/// (train, val, test) groups of the given sizes.
SplitSpec split_by_identity(const Dataset& dataset, std::array<std::size_t, 3> counts, std::uint64_t seed);

struct NegativeKeys {
    SampleKey pose;
    SampleKey identity;
    SampleKey emotion;
};

struct BatchItem {
    SampleKey base;      ///< (i, e, p0): source of the face embedding
    SampleKey positive;  ///< (i, e, p): target pose image and real target embedding
    NegativeKeys negatives;
};

struct Batch {
    std::vector<BatchItem> items;
    std::size_t skipped = 0;  ///< draws with no eligible target pose or negative
};

/// Draws batch_size items from the training identities of `split`.
Batch make_batch(const Dataset& dataset, const SplitSpec& split, std::size_t batch_size, std::uint64_t seed);
/// Same, drawing from every record of `pool` (already restricted to one split).
Batch make_batch(const Dataset& pool, std::size_t batch_size, std::uint64_t seed);

}  // namespace fra::data
