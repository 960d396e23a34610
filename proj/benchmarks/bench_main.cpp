#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "flagforge/flagspace.hpp"
#include "flagforge/learn.hpp"
#include "flagforge/pareto.hpp"
#include "flagforge/stats.hpp"

using namespace flagforge;

namespace {

void BM_ParetoFilter(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(1, 100);
  std::vector<FrontierPoint> points;
  for (int i = 0; i < state.range(0); ++i) points.push_back({std::to_string(i), {d(rng), d(rng)}});
  for (auto _ : state) benchmark::DoNotOptimize(pareto_filter(points));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ParetoFilter)->RangeMultiplier(4)->Range(64, 16384)->Complexity();

void BM_Summarize(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(10, 0.1);
  std::vector<double> samples;
  for (int i = 0; i < state.range(0); ++i) samples.push_back(d(rng));
  for (auto _ : state) benchmark::DoNotOptimize(summarize(samples));
}
BENCHMARK(BM_Summarize)->Arg(3)->Arg(10)->Arg(100)->Arg(1000);

void BM_LooCv(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0, 100);
  LabeledDataset data;
  for (int i = 0; i < state.range(0); ++i) {
    LabeledItem item;
    for (int f = 1; f <= 20; ++f) item.features.values[FeatureId(f)] = d(rng);
    item.label = "s" + std::to_string(i % 5);
    data.items.push_back(item);
  }
  ModelSpec spec;
  spec.kind = state.range(1) ? ModelKind::kDecisionTree : ModelKind::kNearestNeighbor;
  spec.max_depth = 4;
  for (auto _ : state) benchmark::DoNotOptimize(loo_cv(spec, data));
}
BENCHMARK(BM_LooCv)->Args({50, 0})->Args({200, 0})->Args({50, 1})->Args({200, 1});

void BM_SampleRender(benchmark::State& state) {
  auto space = load_flagspace("gcc", "4.9.2", default_flagspace_dirs());
  SamplingPolicy policy;
  policy.enable_parametric = true;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    policy.seed = ++seed;
    auto a = sample_random(space, policy);
    benchmark::DoNotOptimize(parse(render(a, space), space));
  }
}
BENCHMARK(BM_SampleRender);

}  // namespace
BENCHMARK_MAIN();
