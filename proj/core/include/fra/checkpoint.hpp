#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fra/model.hpp"
#include "fra/objective.hpp"
#include "fra/tensor.hpp"

namespace fra::ckpt {

inline constexpr int kFormatVersion = 1;

/// Plain-text manifest followed by a little-endian float64 payload.
struct Checkpoint {
    int version = kFormatVersion;
    std::string config_json = "{}";
    std::string metadata_json = "{}";
    std::size_t step = 0;
    std::vector<objective::LossBreakdown> history;
    std::map<std::string, Tensor> tensors;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize(const Checkpoint& ckpt);
/// Throws LoadError on a version mismatch or a malformed file.
Checkpoint deserialize(const std::string& bytes, const std::string& source = "checkpoint");

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// FNV-1a 64 of the serialized bytes, as 16 hex digits.
std::string content_id(const std::string& bytes);

/// Adds every model parameter to the tensor table.
void store_model(Checkpoint& ckpt, const FraModel& model);
/// Copies checkpoint tensors into the model. Throws LoadError naming every
/// missing or mis-shaped tensor.
void restore_model(const Checkpoint& ckpt, FraModel& model);

inline constexpr const char* kVelocityPrefix = "opt.velocity.";

}  // namespace fra::ckpt
