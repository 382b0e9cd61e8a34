#include <benchmark/benchmark.h>

#include "distileval/augment.hpp"
#include "distileval/rng.hpp"

using namespace distileval;

static void BM_AugmentBatch(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int k = static_cast<int>(state.range(1));
    Tensor images({n, 3, 32, 32});
    RngStream rng{3};
    for (auto& v : images.data) v = rng.uniform01();
    AugmentConfig cfg;
    cfg.k = k;
    std::uint64_t epoch = 0;
    for (auto _ : state) {
        Tensor out = augment_batch(images, cfg, 11, epoch++, 0);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AugmentBatch)
    ->Args({32, 1})
    ->Args({32, 2})
    ->Args({32, 4})
    ->Args({128, 2});

BENCHMARK_MAIN();
