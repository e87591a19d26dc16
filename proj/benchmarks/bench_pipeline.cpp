#include <kflearn/experiments.hpp>
#include <kflearn/filtering.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <benchmark/benchmark.h>

using namespace kflearn;

static void BM_Identify(benchmark::State& state) {
  const HankelConfig cfg;
  const Index n = state.range(0);
  const Trajectory tr = simulate(reference_system(), n + cfg.past + cfg.future - 1, 7);
  for (auto _ : state) benchmark::DoNotOptimize(identify(tr, cfg, 3).A_hat);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Identify)->Arg(500)->Arg(32000)->Unit(benchmark::kMillisecond);

static void BM_Sls(benchmark::State& state) {
  const Model md = reference_system();
  SlsOptions opt;
  opt.terminal = state.range(1) ? TerminalCondition::Fir : TerminalCondition::Free;
  const int T = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sls_synthesize(md, 10.0, T, opt).filter.objective_value);
}
BENCHMARK(BM_Sls)->Args({30, 1})->Args({30, 0})->Args({60, 1})->Unit(benchmark::kMillisecond);

static void BM_FirFilter(benchmark::State& state) {
  const Model md = reference_system();
  const FilterSpec spec = FilterSpec::fir(md, sls_synthesize(md, 10.0, 30).filter.coeffs);
  const Trajectory tr = simulate(md, 100000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(run_filter(spec, tr));
  state.SetItemsProcessed(state.iterations() * tr.length());
}
BENCHMARK(BM_FirFilter)->Unit(benchmark::kMillisecond);

static void BM_Trial(benchmark::State& state) {
  const ExperimentConfig cfg;
  int t = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_trial(cfg, state.range(0), t++ % cfg.trials).j_ce);
}
BENCHMARK(BM_Trial)->Arg(500)->Arg(32000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
