// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "fedbilevel/federation.hpp"
#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/quadratic.hpp"
#include "fedbilevel/rng.hpp"

namespace {

using namespace fedbilevel;

QuadraticBilevelSpec bench_spec(int num_clients, int dim, double sigma) {
  QuadraticRandomOptions opt;
  opt.num_clients = num_clients;
  opt.dim_upper = dim;
  opt.dim_lower = dim;
  opt.sigma = sigma;
  opt.seed = 12345;
  return random_quadratic_spec(opt);
}

// Cost of one stochastic hypergradient draw as the truncation K grows.
void BM_NeumannHypergrad(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const QuadraticProblem problem(bench_spec(1, 20, 0.1));
  RngStream rng(7);
  const Vector x = rng.gaussian_vector(20);
  const Vector y = rng.gaussian_vector(20);
  NeumannConfig cfg;
  cfg.K = K;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = ++seed;
    benchmark::DoNotOptimize(neumann_hypergrad(problem, 0, x, y, cfg));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_NeumannHypergrad)->RangeMultiplier(2)->Range(1, 64);

// End-to-end iteration cost of the federated loop as clients are added.
void BM_RunIteration(benchmark::State& state) {
  const int M = static_cast<int>(state.range(0));
  const QuadraticProblem problem(bench_spec(M, 10, 0.1));
  ScheduleConfig cfg;
  cfg.T = 64;
  cfg.q = 8;
  cfg.K = 4;
  cfg.gamma = 0.1;
  cfg.lambda = 0.1;
  cfg.rho = 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        run(problem, cfg, AdaptiveRule::kNormScalar, 42));
  }
  state.SetItemsProcessed(state.iterations() * cfg.T);
}
BENCHMARK(BM_RunIteration)->RangeMultiplier(2)->Range(1, 16)
    ->Unit(benchmark::kMillisecond);

// Sampled Hessian-vector product cost across problem sizes.
void BM_HvpSample(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const QuadraticProblem problem(bench_spec(1, dim, 0.1));
  RngStream rng(11);
  const Vector x = rng.gaussian_vector(dim);
  const Vector y = rng.gaussian_vector(dim);
  const Vector v = rng.gaussian_vector(dim);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(problem.hvp_yy_g(0, x, y, v, ++seed));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HvpSample)->RangeMultiplier(4)->Range(8, 128);

}  // namespace

BENCHMARK_MAIN();
