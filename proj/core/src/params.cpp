#include "fra/params.hpp"

namespace fra {

Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.values()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

Tensor normal_param(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.values()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

Tensor constant_param(Shape shape, double value) {
    Tensor t(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

void zero_grads(const std::vector<ad::NamedParam>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace fra
