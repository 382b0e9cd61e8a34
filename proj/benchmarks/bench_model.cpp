#include <benchmark/benchmark.h>

#include "distileval/arch_zoo.hpp"
#include "distileval/objectives.hpp"
#include "distileval/rng.hpp"

using namespace distileval;

namespace {

Tensor random_batch(int n, const std::vector<int>& input_shape,
                    std::uint64_t seed) {
    Tensor x({n, input_shape[0], input_shape[1], input_shape[2]});
    RngStream rng{seed};
    for (auto& v : x.data) v = rng.uniform01();
    return x;
}

std::vector<int> labels_mod(int n, int classes) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i % classes;
    return out;
}

void bench_forward(benchmark::State& state, const ArchSpec& spec) {
    auto model = build_model<double>(spec, 1);
    const Tensor x = random_batch(static_cast<int>(state.range(0)),
                                  spec.input_shape, 2);
    for (auto _ : state) {
        Tensor y = model->forward(x, false);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bench_train_step(benchmark::State& state, const ArchSpec& spec) {
    auto model = build_model<double>(spec, 1);
    const int n = static_cast<int>(state.range(0));
    const Tensor x = random_batch(n, spec.input_shape, 2);
    const TargetBatch target =
        TargetBatch::hard_labels(labels_mod(n, spec.num_classes));
    std::uint64_t step = 0;
    for (auto _ : state) {
        model->zero_grad();
        Tensor logits = model->forward(x, true, 0.8, 7, step++);
        Tensor grad;
        ce_loss(logits, target, &grad);
        benchmark::DoNotOptimize(model->backward(grad).data.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}

ArchSpec cnn3_spec() {
    ArchSpec s;
    s.family = "cnn3";
    return s;
}

ArchSpec resnet8_spec(bool droppath) {
    ArchSpec s;
    s.family = "resnet8";
    s.droppath_enabled = droppath;
    return s;
}

} // namespace

BENCHMARK_CAPTURE(bench_forward, cnn3, cnn3_spec())->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(bench_forward, resnet8, resnet8_spec(false))
    ->Arg(16)
    ->Arg(64);
BENCHMARK_CAPTURE(bench_train_step, cnn3, cnn3_spec())->Arg(16);
BENCHMARK_CAPTURE(bench_train_step, resnet8, resnet8_spec(false))->Arg(16);
BENCHMARK_CAPTURE(bench_train_step, resnet8_droppath, resnet8_spec(true))
    ->Arg(16);

BENCHMARK_MAIN();
