#include "fra/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "fra/error.hpp"

namespace fra::ad {
namespace {

double evaluate(const LossFn& f) {
    Tape tape(GradMode::kDisabled);
    return f(tape).value().item();
}

struct Coordinate {
    std::size_t param;
    std::size_t index;
};

std::vector<Coordinate> pick_coordinates(std::span<const NamedParam> params, const CheckOptions& options) {
    std::vector<Coordinate> all;
    std::size_t total = 0;
    for (const NamedParam& p : params) total += p.tensor->numel();
    if (options.max_coordinates == 0 || options.max_coordinates >= total) {
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < params[k].tensor->numel(); ++i) all.push_back({k, i});
        return all;
    }
    // Round-robin over tensors so every parameter group is represented.
    std::mt19937_64 rng(options.seed);
    std::vector<std::vector<std::size_t>> pools(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        pools[k].resize(params[k].tensor->numel());
        for (std::size_t i = 0; i < pools[k].size(); ++i) pools[k][i] = i;
        std::shuffle(pools[k].begin(), pools[k].end(), rng);
    }
    std::vector<std::size_t> order(params.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> cursor(params.size(), 0);
    while (all.size() < options.max_coordinates) {
        for (std::size_t k : order) {
            if (all.size() == options.max_coordinates) break;
            if (cursor[k] < pools[k].size()) all.push_back({k, pools[k][cursor[k]++]});
        }
    }
    return all;
}

}  // namespace

CheckReport finite_diff_check(const LossFn& f, std::span<const NamedParam> params, const CheckOptions& options) {
    if (!(options.step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
    for (const NamedParam& p : params) {
        if (!p.tensor->requires_grad()) {
            throw ContractError("finite_diff_check: parameter '" + p.name + "' does not require gradients");
        }
    }

    const double first = evaluate(f);
    const double second = evaluate(f);
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
        throw ContractError("finite_diff_check: loss is not deterministic (" + std::to_string(first) + " vs " +
                            std::to_string(second) + ")");
    }

    for (const NamedParam& p : params) p.tensor->zero_grad();
    {
        Tape tape;
        Var loss = f(tape);
        tape.backward(loss);
    }

    CheckReport report;
    report.tolerance = options.tolerance;
    report.step = options.step;
    for (const Coordinate& c : pick_coordinates(params, options)) {
        Tensor& t = *params[c.param].tensor;
        const double saved = t[c.index];
        t[c.index] = saved + options.step;
        const double plus = evaluate(f);
        t[c.index] = saved - options.step;
        const double minus = evaluate(f);
        t[c.index] = saved;

        CoordinateError e;
        e.tensor = params[c.param].name;
        e.index = c.index;
        e.analytic = t.grad()[c.index];
        e.numeric = (plus - minus) / (2.0 * options.step);
        const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), options.denominator_floor});
        e.rel_error = std::abs(e.analytic - e.numeric) / denom;
        ++report.checked;
        ++report.per_tensor[e.tensor];
        if (e.rel_error > report.max_rel_error || report.checked == 1) {
            report.max_rel_error = e.rel_error;
            report.worst = e;
        }
        if (!(e.rel_error < options.tolerance)) report.failures.push_back(e);
    }
    return report;
}

}  // namespace fra::ad
