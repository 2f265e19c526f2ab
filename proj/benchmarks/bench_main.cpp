#include <benchmark/benchmark.h>

#include "fwlab/action.hpp"
#include "fwlab/optimize.hpp"
#include "fwlab/rng.hpp"
#include "fwlab/simulate.hpp"

using namespace fwlab;

static void BM_Philox(benchmark::State& state) {
  std::array<std::uint32_t, 4> ctr{0, 0, 0, 0};
  for (auto _ : state) {
    ++ctr[0];
    benchmark::DoNotOptimize(philox4x32(ctr, {1, 2}));
  }
}
BENCHMARK(BM_Philox);

static void BM_NormalStream(benchmark::State& state) {
  NormalStream s(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(s.next());
}
BENCHMARK(BM_NormalStream);

static void BM_ActionGradient(benchmark::State& state) {
  const auto m = make_rotational_ou(1.0);
  const PeriodicPath loop = circle_loop(0.5, 1.3, static_cast<int>(state.range(0)), Vec::Zero(2));
  for (auto _ : state) benchmark::DoNotOptimize(action_gradient(m, loop));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ActionGradient)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

static void BM_RatePoint(benchmark::State& state) {
  const auto m = make_rotational_ou(1.0);
  OptimizerConfig cfg;
  cfg.nodes = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rate_point(m, 0.5, cfg).s);
}
BENCHMARK(BM_RatePoint)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_EulerBatch(benchmark::State& state) {
  const auto m = make_rotational_ou(1.0);
  SimConfig c;
  c.eps = 0.1;
  c.grid = TimeGrid(10.0, 1000);
  c.batch = 100;
  BatchOptions o;
  o.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(batch_simulate(m, c, Vec::Zero(2), o).summaries.size());
  state.SetItemsProcessed(state.iterations() * c.batch * 1000);
}
BENCHMARK(BM_EulerBatch)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
