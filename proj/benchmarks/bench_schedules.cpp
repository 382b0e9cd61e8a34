#include <benchmark/benchmark.h>

#include "distileval/schedules.hpp"

using namespace distileval;

static void BM_KeepRate(benchmark::State& state) {
    const KeepRateConfig cfg;
    int i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(keep_rate(cfg, i));
        i = (i + 1) % cfg.N;
    }
}
BENCHMARK(BM_KeepRate);

static void BM_LearningRate(benchmark::State& state) {
    const LrConfig cfg;
    int i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(learning_rate(cfg, i));
        i = (i + 1) % 4000;
    }
}
BENCHMARK(BM_LearningRate);

// Cost of tabulating a whole run's schedule, as the CLI dump does.
static void BM_ScheduleTable(benchmark::State& state) {
    const KeepRateConfig kr;
    const LrConfig lc;
    for (auto _ : state) {
        double acc = 0.0;
        for (int i = 0; i < kr.N; ++i)
            acc += keep_rate(kr, i) + learning_rate(lc, i) +
                   cosine_baseline_lr(lc.lr_max, kr.N, i);
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_ScheduleTable);

BENCHMARK_MAIN();
