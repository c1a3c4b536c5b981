#include <benchmark/benchmark.h>

#include <random>

#include "fra/autodiff.hpp"
#include "fra/config.hpp"
#include "fra/model.hpp"
#include "fra/ops.hpp"

using namespace fra;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    for (auto _ : state) {
        ad::Tape tape(ad::GradMode::kDisabled);
        benchmark::DoNotOptimize(ad::matmul(tape.input(a), tape.input(b)).value()[0]);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({8, size, size}, 3);
    Tensor k = random_tensor({16, 8, 4, 4}, 4), b = random_tensor({16}, 5);
    k.set_requires_grad(true);
    b.set_requires_grad(true);
    for (auto _ : state) {
        ad::Tape tape;
        const ad::Var y = ad::conv2d(tape.input(x), tape.parameter(k), tape.parameter(b), {2, 1});
        tape.backward(ad::sum(y));
        benchmark::DoNotOptimize(k.grad()[0]);
    }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64);

void BM_CombinerForward(benchmark::State& state) {
    const config::RunConfig cfg;
    const FraModel model(cfg.model, 1);
    const Tensor face = random_tensor({cfg.model.combiner.face_dim}, 6);
    const Tensor pose = random_tensor({cfg.model.combiner.pose_dim}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(model.combiner.forward(face, pose)[0]);
}
BENCHMARK(BM_CombinerForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
