// Serial reference kernels against their OpenMP counterparts.
//
//   bench_kernels --benchmark_filter=Features
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "enacull/features.hpp"
#include "enacull/forest.hpp"
#include "enacull/pipeline.hpp"
#include "enacull/rng.hpp"
#include "enacull/simulator.hpp"

using namespace enacull;

namespace {

TruthLabeledArc bench_arc(std::size_t n_time) {
  SimConfig c;
  c.seed = 11;
  c.n_time = n_time;
  c.signal_profile = bump_signal_profile(2.0, 6.0, 30.0, 6.0);
  c.isotropic_bg_rate = 1.0;
  c.monitor_coupling = 0.5;
  c.bursts.push_back({{2, 6}, {5, 50}, {static_cast<int>(n_time / 4), static_cast<int>(n_time / 2)}, 12.0});
  return simulate_arc(c);
}

const TruthLabeledArc& arc() {
  static const TruthLabeledArc a = bench_arc(500);
  return a;
}

const FeatureMatrix& matrix() {
  static const FeatureMatrix m = compute_features(arc().grid);
  return m;
}

const Forest& forest() {
  static const Forest f = [] {
    TrainConfig c;
    c.n_trees = 50;
    c.sample_size = 20000;
    return fit_forest(sample_training_set(matrix(), matrix().sme, -1, c), c);
  }();
  return f;
}

void BM_FeaturesSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(compute_features_reference(arc().grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(matrix().rows()));
}

void BM_FeaturesParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(compute_features(arc().grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(matrix().rows()));
}

void BM_PredictSerial(benchmark::State& state) {
  forest();
  for (auto _ : state) benchmark::DoNotOptimize(predict_proba_serial(forest(), matrix()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(matrix().rows()));
}

void BM_PredictParallel(benchmark::State& state) {
  forest();
  for (auto _ : state) benchmark::DoNotOptimize(predict_proba(forest(), matrix()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(matrix().rows()));
}

void BM_Stages(benchmark::State& state) {
  forest();
  const auto fov = fov_cells_from_visibility(arc().grid);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_pipeline(forest(), matrix(), arc().grid, fov, PipelineConfig{}));
  }
}

// One default-shaped tree on a sample of the given size.
void BM_FitTree(benchmark::State& state) {
  TrainConfig c;
  c.sample_size = static_cast<std::size_t>(state.range(0));
  const auto data = sample_training_set(matrix(), matrix().sme, -1, c);
  for (auto _ : state) {
    Rng rng(derive_seed(c.seed, 1));
    benchmark::DoNotOptimize(fit_tree(data, c, rng));
  }
}

}  // namespace

BENCHMARK(BM_FeaturesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeaturesParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Stages)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitTree)->Arg(20000)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
