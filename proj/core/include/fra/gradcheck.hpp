#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fra/autodiff.hpp"

namespace fra::ad {

struct NamedParam {
    std::string name;
    Tensor* tensor;
};

struct CoordinateError {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct CheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    CoordinateError worst;
    std::vector<CoordinateError> failures;
    /// Coordinates checked per parameter tensor.
    std::map<std::string, std::size_t> per_tensor;
    double tolerance = 0.0;
    double step = 0.0;

    bool passed() const noexcept { return failures.empty(); }
};

struct CheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// 0 checks every coordinate; otherwise this many, spread across tensors.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
    /// Lower bound on the relative-error denominator max(|analytic|, |numeric|).
    double denominator_floor = 1e-7;
};

/// Builds the scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences
/// (f(t+h) - f(t-h)) / 2h. Throws ContractError when f is not deterministic.
CheckReport finite_diff_check(const LossFn& f, std::span<const NamedParam> params, const CheckOptions& options);

}  // namespace fra::ad
