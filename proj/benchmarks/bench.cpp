#include <cmath>
#include <memory>

#include <benchmark/benchmark.h>

#include "mstree/calibration.hpp"
#include "mstree/features.hpp"
#include "mstree/forest.hpp"
#include "mstree/market_data.hpp"
#include "mstree/pricing.hpp"
#include "mstree/tree.hpp"

namespace {

using namespace mstree;

constexpr double kSpot = 600.0;
constexpr double kVol = 0.243;
constexpr double kRate = 0.05;

OptionSpec atm_call() {
  OptionSpec s;
  s.strike = 600.0;
  s.maturity = days_to_years(30.0);
  s.rate = kRate;
  return s;
}

std::shared_ptr<const StateTable> crr_states(std::size_t n_steps) {
  const double dt = atm_call().maturity / static_cast<double>(n_steps);
  const double u = std::exp(kVol * std::sqrt(dt));
  return std::make_shared<const StateTable>(single_state_table(u, 1.0 / u, kRate, dt));
}

void BM_BlackScholes(benchmark::State& state) {
  const OptionSpec spec = atm_call();
  for (auto _ : state) benchmark::DoNotOptimize(black_scholes(kSpot, spec, kVol).price);
}
BENCHMARK(BM_BlackScholes);

void BM_Crr(benchmark::State& state) {
  const OptionSpec spec = atm_call();
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(price_crr(kSpot, spec, kVol, n).price);
}
BENCHMARK(BM_Crr)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_BuildTree(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto table = crr_states(n);
  const double dt = table->dt_tree;
  for (auto _ : state) {
    const PricingTree tree = build_tree(kSpot, n, kRate, dt, table, 0.5);
    benchmark::DoNotOptimize(tree.levels.data());
  }
  state.counters["nodes"] = static_cast<double>(projected_node_count(n, std::nullopt));
}
BENCHMARK(BM_BuildTree)->DenseRange(8, 14, 2)->Unit(benchmark::kMillisecond);

void BM_BuildTreeAggregated(benchmark::State& state) {
  const auto table = crr_states(20);
  TreeOptions opts;
  opts.aggregation = AggregationOptions{static_cast<std::size_t>(state.range(0)), 1.0, 1.0};
  for (auto _ : state) {
    const PricingTree tree = build_tree(kSpot, 20, kRate, table->dt_tree, table, 0.5, opts);
    benchmark::DoNotOptimize(tree.levels.data());
  }
}
BENCHMARK(BM_BuildTreeAggregated)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  const auto table = crr_states(10);
  MonteCarloOptions mo;
  mo.n_paths = static_cast<std::size_t>(state.range(0));
  mo.n_threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(price_monte_carlo(table, kSpot, atm_call(), 10, 0.5, mo).price);
  }
}
BENCHMARK(BM_MonteCarlo)->Arg(10000)->Arg(200000)->Unit(benchmark::kMillisecond);

void BM_TrainForest(benchmark::State& state) {
  GeneratorConfig gen;
  gen.n_bars = 10000;
  const FeatureMatrix m = build_features(synthesize_bars(gen, 7));
  ForestConfig cfg;
  cfg.n_trees = static_cast<std::size_t>(state.range(0));
  cfg.n_threads = 1;
  for (auto _ : state) {
    const Forest f = train(m, cfg);
    benchmark::DoNotOptimize(f.trees().data());
  }
}
BENCHMARK(BM_TrainForest)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_BuildFeatures(benchmark::State& state) {
  GeneratorConfig gen;
  gen.n_bars = 20000;
  const BarSeries bars = synthesize_bars(gen, 7);
  for (auto _ : state) benchmark::DoNotOptimize(build_features(bars).rows.data());
}
BENCHMARK(BM_BuildFeatures)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
