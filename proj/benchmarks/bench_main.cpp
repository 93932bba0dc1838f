#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "critshe/dbg.hpp"
#include "critshe/duality_mc.hpp"
#include "critshe/she_sim.hpp"

using namespace critshe;

static void BM_SBetaTable(benchmark::State& state) {
  const SBetaKernel s(1.0);
  double tau = 1e-3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s(tau));
    tau = tau < 10.0 ? tau * 1.01 : 1e-3;
  }
}
BENCHMARK(BM_SBetaTable);

static void BM_SBetaExact(benchmark::State& state) {
  const SBetaKernel s(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(s.exact(0.37));
}
BENCHMARK(BM_SBetaExact);

static void BM_SBetaBuild(benchmark::State& state) {
  for (auto _ : state) {
    SBetaKernel s(2.0);
    benchmark::DoNotOptimize(s.beta());
  }
}
BENCHMARK(BM_SBetaBuild)->Unit(benchmark::kMillisecond);

static void BM_MeanSurvival(benchmark::State& state) {
  const SBetaKernel s(1.0);
  const InitialData g = InitialData::mixture({{1.0, {0.0, 0.0}, 0.5}});
  for (auto _ : state) benchmark::DoNotOptimize(m_g(s, g, {0.3, 0.1}, 0.5));
}
BENCHMARK(BM_MeanSurvival)->Unit(benchmark::kMicrosecond);

static void BM_SimulatorStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  SimConfig cfg = make_sim_config(0.4, 0.0, 0.05, n, 6.4, 1, 1);
  Simulator sim(cfg);
  RngStream rng = rng_stream(1, 0);
  std::vector<double> field = sim.initial_field();
  for (auto _ : state) sim.step(field, rng);
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_SimulatorStep)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

static void BM_TwoPointMoment(benchmark::State& state) {
  const PathConfig cfg = make_path_config(0.2, 0.0, 0.1, state.range(0), 3);
  const MomentRequest req{{{0.0, 0.0}, {0.05, 0.0}}, 0.1, InitialData::constant(1.0)};
  for (auto _ : state) benchmark::DoNotOptimize(n_point_moment(req, cfg).mean);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TwoPointMoment)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_GuidedLaplace(benchmark::State& state) {
  const PathConfig cfg = make_path_config(std::exp(-3.0), 0.0, 1.0, 500, 5);
  const double q = 3.0 * cfg.params.beta;
  for (auto _ : state) benchmark::DoNotOptimize(S_eps(q, cfg).estimate.mean);
}
BENCHMARK(BM_GuidedLaplace)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
