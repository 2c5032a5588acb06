#include <benchmark/benchmark.h>

#include "fhdgm/estimate.hpp"
#include "fhdgm/simulate.hpp"
#include "fhdgm/statespace.hpp"

using namespace fhdgm;

namespace {

SimulatedData network_sim(int n) { return simulate_dataset(rescale(builtin_setting("II"), n, 60), 1); }

// Exact likelihood over n stations, unpartitioned (k = 1) or split into k blocks.
void BM_Loglik(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const auto k = static_cast<int>(state.range(1));
  const auto sim = network_sim(n);
  const auto obs = make_observation_model(sim.data, sim.bases);
  const Eigen::MatrixXd dist = distance_matrix(sim.data.network);
  const Partition part = k > 1 ? partition_stations(sim.data.network, k) : Partition::single(sim.data.network.size());
  for (auto _ : state) benchmark::DoNotOptimize(loglik(sim.truth, sim.data, obs, part, dist));
  state.counters["state_dim"] = static_cast<double>(n * sim.bases.omega.count());
}
BENCHMARK(BM_Loglik)->Args({5, 1})->Args({10, 1})->Args({10, 2})->Args({15, 1})->Args({15, 3})->Unit(benchmark::kMillisecond);

void BM_SteadyStateGains(benchmark::State& state) {
  const auto sim = network_sim(10);
  const auto ssf = build_state_space(sim.truth, sim.data, sim.bases);
  const double tol = state.range(0) ? 1e-8 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(kalman_gains(ssf, tol).log_det);
}
BENCHMARK(BM_SteadyStateGains)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FitMle(benchmark::State& state) {
  const auto sim = simulate_dataset(desk_scale(builtin_setting("III")), 3);
  const auto st = standardize(sim.data);
  for (auto _ : state) benchmark::DoNotOptimize(fit_mle(st.data, sim.bases).loglik());
}
BENCHMARK(BM_FitMle)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
