#include <benchmark/benchmark.h>

#include <vector>

#include "distileval/lion.hpp"
#include "distileval/rng.hpp"

using namespace distileval;

namespace {

struct Workload {
    std::vector<Tensor> values, grads;
    std::vector<ParamSlot> slots;

    explicit Workload(int n_params, int param_size) {
        RngStream rng{5};
        values.reserve(static_cast<std::size_t>(n_params));
        grads.reserve(static_cast<std::size_t>(n_params));
        for (int i = 0; i < n_params; ++i) {
            Tensor v({param_size}), g({param_size});
            for (auto& x : v.data) x = rng.uniform(-1.0, 1.0);
            for (auto& x : g.data) x = rng.uniform(-1.0, 1.0);
            values.push_back(std::move(v));
            grads.push_back(std::move(g));
        }
        for (int i = 0; i < n_params; ++i)
            slots.push_back({"p" + std::to_string(i),
                             &values[static_cast<std::size_t>(i)],
                             &grads[static_cast<std::size_t>(i)]});
    }
};

} // namespace

static void BM_LionStep(benchmark::State& state) {
    Workload w(static_cast<int>(state.range(0)),
               static_cast<int>(state.range(1)));
    Lion opt;
    for (auto _ : state) opt.step(w.slots, 1e-4);
    state.SetItemsProcessed(state.iterations() * state.range(0) *
                            state.range(1));
}
BENCHMARK(BM_LionStep)->Args({20, 4096})->Args({60, 16384});

static void BM_AdamwStep(benchmark::State& state) {
    Workload w(static_cast<int>(state.range(0)),
               static_cast<int>(state.range(1)));
    AdamW opt;
    for (auto _ : state) opt.step(w.slots, 1e-4);
    state.SetItemsProcessed(state.iterations() * state.range(0) *
                            state.range(1));
}
BENCHMARK(BM_AdamwStep)->Args({20, 4096})->Args({60, 16384});

BENCHMARK_MAIN();
