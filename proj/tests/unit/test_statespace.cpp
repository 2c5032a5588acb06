#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fhdgm/error.hpp"
#include "fhdgm/estimate.hpp"
#include "fhdgm/simulate.hpp"
#include "fhdgm/statespace.hpp"
#include "oracles/dense_gaussian.hpp"
#include "support/fixtures.hpp"

using namespace fhdgm;

TEST(Dataset, NormalizeSortsRowsAndValidates) {
  auto inst = fixtures::tiny_instance(7);
  auto& d = inst.data;
  for (std::size_t r = 1; r < d.rows(); ++r) {
    const auto a = std::tuple(d.day[r - 1], d.station[r - 1], d.hour[r - 1]);
    const auto b = std::tuple(d.day[r], d.station[r], d.hour[r]);
    EXPECT_LE(a, b);
  }
  d.day[0] = d.days;
  EXPECT_THROW(d.validate(), Error);
}

TEST(Dataset, DesignLayout) {
  auto sim = simulate_dataset(desk_scale(builtin_setting("III")), 1);
  const Eigen::MatrixXd x = fixed_effects_design(sim.data, sim.bases.mu, true);
  ASSERT_EQ(x.cols(), 3 * 7 + 7);
  const Eigen::VectorXd b = sim.bases.mu.eval(sim.data.hour[10]);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 7; ++k) EXPECT_NEAR(x(10, j * 7 + k), sim.data.X(10, j) * b(k), 1e-15);
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(x(10, 21 + k), b(k), 1e-15);
}

TEST(StateSpace, LikelihoodMatchesDenseOracle) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto inst = fixtures::tiny_instance(seed);
    const auto obs = make_observation_model(inst.data, inst.bases);
    const double kalman = loglik(inst.params, inst.data, obs, Partition::single(inst.data.network.size()),
                                 distance_matrix(inst.data.network));
    const auto rows = fixtures::observed_rows(inst.data);
    const double dense = oracle::mvn_loglik(fixtures::latent_law(inst), fixtures::to_oracle(inst, rows), inst.params.beta);
    EXPECT_NEAR(kalman, dense, 1e-9 * std::max(1.0, std::abs(dense))) << "seed " << seed;
  }
}

TEST(StateSpace, KrigingMatchesGaussianConditioning) {
  for (std::uint64_t seed = 200; seed < 215; ++seed) {
    const auto inst = fixtures::tiny_instance(seed);
    const auto obs = make_observation_model(inst.data, inst.bases);
    std::vector<std::size_t> targets, train;
    for (std::size_t r = 0; r < inst.data.rows(); ++r) (r % 3 == 1 ? targets : train).push_back(r);
    std::vector<std::size_t> observed_train;
    for (auto r : train)
      if (inst.data.observed(r)) observed_train.push_back(r);
    if (targets.empty() || observed_train.empty()) continue;
    const Eigen::VectorXd got = predict(inst.params, inst.data, obs, Partition::single(inst.data.network.size()),
                                        distance_matrix(inst.data.network), targets);
    const Eigen::VectorXd want = oracle::kriging(fixtures::latent_law(inst), fixtures::to_oracle(inst, observed_train),
                                                 fixtures::to_oracle(inst, targets), inst.params.beta);
    ASSERT_EQ(got.size(), want.size());
    for (Eigen::Index i = 0; i < got.size(); ++i) EXPECT_NEAR(got(i), want(i), 1e-9) << "seed " << seed;
  }
}

TEST(StateSpace, SmootherMeansMatchConditionalExpectation) {
  const auto inst = fixtures::tiny_instance(42);
  const auto ssf = build_state_space(inst.params, inst.data, inst.bases);
  const auto sm = kalman_smoother(ssf);
  const auto law = fixtures::latent_law(inst);
  const auto rows = fixtures::observed_rows(inst.data);
  const auto o = fixtures::to_oracle(inst, rows);
  // E[z_{s,t,k} | y] = Cov(z, y) Sigma^{-1} (y - mu)
  const Eigen::MatrixXd sigma = oracle::joint_cov(law, o);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(o.size()));
  for (std::size_t i = 0; i < o.size(); ++i) resid(static_cast<Eigen::Index>(i)) = o[i].y - o[i].design.dot(inst.params.beta);
  const Eigen::VectorXd alpha = sigma.ldlt().solve(resid);
  const int n = static_cast<int>(inst.data.network.size());
  for (int t = 0; t < inst.data.days; ++t)
    for (int k = 0; k < ssf.k_omega; ++k)
      for (int s = 0; s < n; ++s) {
        double e = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i)
          e += o[i].loading(k) * oracle::latent_cov(law, k, s, t, o[i].station, o[i].day) * alpha(static_cast<Eigen::Index>(i));
        EXPECT_NEAR(sm.means[static_cast<std::size_t>(t)](ssf.state_index(k, s)), e, 1e-9);
      }
  EXPECT_NEAR(sm.loglik, kalman_filter(ssf).loglik, 1e-10);
}

TEST(StateSpace, SharedGainsReproduceFilter) {
  const auto inst = fixtures::tiny_instance(5);
  const auto ssf = build_state_space(inst.params, inst.data, inst.bases);
  const auto filt = kalman_filter(ssf);
  const auto gains = kalman_gains(ssf);
  const Eigen::MatrixXd col = ssf.response - ssf.offset;
  const Eigen::MatrixXd innov = filter_innovations(ssf, gains, col);
  EXPECT_LT((innov.col(0) - filt.innovations).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(innovations_loglik(gains, innov.col(0)), filt.loglik, 1e-10);
}

TEST(StateSpace, SteadyStateGainsApproximateExactFilter) {
  auto setting = rescale(builtin_setting("II"), 3, 120);
  const auto sim = simulate_dataset(setting, 9);
  const auto ssf = build_state_space(sim.truth, sim.data, sim.bases);
  const auto exact = kalman_gains(ssf);
  const auto steady = kalman_gains(ssf, 1e-10);
  EXPECT_GT(steady.steady_days, 0);
  EXPECT_NEAR(exact.log_det, steady.log_det, 1e-6);
}

TEST(StateSpace, RejectsNonStationaryAndBadVariance) {
  auto inst = fixtures::tiny_instance(3);
  inst.params.g(0) = 1.0;
  try {
    build_state_space(inst.params, inst.data, inst.bases);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::stationarity);
  }
  inst.params.g(0) = 0.2;
  inst.params.sigma2.setConstant(-1.0);
  try {
    build_state_space(inst.params, inst.data, inst.bases);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::variance);
  }
}

TEST(StateSpace, BlocksOfIndependentGroupsAddUp) {
  // theta == 0 makes stations independent, so any partition is exact.
  auto setting = rescale(builtin_setting("I"), 6, 10);
  setting.g = 0.5;
  const auto sim = simulate_dataset(setting, 4);
  const auto obs = make_observation_model(sim.data, sim.bases);
  const Eigen::MatrixXd d = distance_matrix(sim.data.network);
  const double one = loglik(sim.truth, sim.data, obs, Partition::single(6), d);
  const double three = loglik(sim.truth, sim.data, obs, partition_stations(sim.data.network, 3), d);
  EXPECT_NEAR(one, three, 1e-8 * std::abs(one));
}
