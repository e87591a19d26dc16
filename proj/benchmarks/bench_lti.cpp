#include <kflearn/bounds.hpp>
#include <kflearn/experiments.hpp>
#include <kflearn/synthesis.hpp>

#include <benchmark/benchmark.h>

using namespace kflearn;

static void BM_Lyapunov(benchmark::State& state) {
  const Model md = reference_system();
  const Matrix Q = md.K * md.R * md.K.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(lyapunov_solve(md.A, Q));
}
BENCHMARK(BM_Lyapunov);

static void BM_HinfInnovation(benchmark::State& state) {
  const Model md = reference_system();
  for (auto _ : state) benchmark::DoNotOptimize(innovation_hinf(md));
}
BENCHMARK(BM_HinfInnovation);

static void BM_CeRiccatiUnstable(benchmark::State& state) {
  Model md = reference_system();
  md.K(0, 0) = 0.2;  // A - KC unstable, so the Riccati iteration runs
  for (auto _ : state) benchmark::DoNotOptimize(ce_synthesize(md).P);
}
BENCHMARK(BM_CeRiccatiUnstable);

static void BM_CeConstantMinimum(benchmark::State& state) {
  const Model md = reference_system();
  for (auto _ : state) benchmark::DoNotOptimize(ce_constant_at(md, 0.75));
}
BENCHMARK(BM_CeConstantMinimum);
