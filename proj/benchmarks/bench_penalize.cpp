#include <random>

#include <benchmark/benchmark.h>

#include "fhdgm/penalize.hpp"

using namespace fhdgm;

namespace {

QuadraticSurrogate surrogate(int p) {
  std::mt19937_64 rng(p);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd r(3 * p, p);
  for (auto& x : r.reshaped()) x = normal(rng);
  QuadraticSurrogate q;
  q.H0 = -(r.transpose() * r);
  q.beta0.resize(p);
  for (auto& b : q.beta0) b = normal(rng);
  q.N = 300;
  return q;
}

void BM_SolutionPath(benchmark::State& state) {
  const auto q = surrogate(static_cast<int>(state.range(0)));
  PenaltySpec spec;
  spec.weights = adaptive_weights(q.beta0, 1.0);
  spec.lambda_grid = lambda_grid(1e-5, lambda_zero(q, spec.weights), 100);
  for (auto _ : state) benchmark::DoNotOptimize(solution_path(q, spec).betas.size());
}
BENCHMARK(BM_SolutionPath)->Arg(21)->Arg(63)->Arg(126)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
