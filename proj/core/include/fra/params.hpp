#pragma once

#include <random>
#include <string>
#include <vector>

#include "fra/gradcheck.hpp"
#include "fra/tensor.hpp"

namespace fra {

struct ConstNamedParam {
    std::string name;
    const Tensor* tensor;
};

/// Uniform(-bound, bound) entries, flagged as requiring gradients.
Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng);
/// Normal(0, stddev) entries, flagged as requiring gradients.
Tensor normal_param(Shape shape, double stddev, std::mt19937_64& rng);
/// Constant entries, flagged as requiring gradients.
Tensor constant_param(Shape shape, double value);

void zero_grads(const std::vector<ad::NamedParam>& params);

}  // namespace fra
