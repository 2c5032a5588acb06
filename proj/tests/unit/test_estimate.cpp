#include <cmath>

#include <gtest/gtest.h>

#include "fhdgm/error.hpp"
#include "fhdgm/estimate.hpp"
#include "fhdgm/simulate.hpp"
#include "oracles/dense_gaussian.hpp"
#include "support/fixtures.hpp"

using namespace fhdgm;

namespace {

SimulatedData small_sim(const std::string& setting, std::uint64_t seed, int n = 4, int days = 30) {
  return simulate_dataset(rescale(builtin_setting(setting), n, days), seed);
}

}  // namespace

TEST(Standardize, PooledMomentsAndBackTransform) {
  auto sim = small_sim("III", 2);
  sim.data.y.array() = 3.0 * sim.data.y.array() + 10.0;
  const auto st = standardize(sim.data);
  EXPECT_NEAR(st.data.y.mean(), 0.0, 1e-12);
  const double n = static_cast<double>(st.data.y.size());
  EXPECT_NEAR(std::sqrt(st.data.y.squaredNorm() / (n - 1.0)), 1.0, 1e-12);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(st.data.X.col(j).mean(), 0.0, 1e-12);

  // The fitted curve on the original scale equals the back-transformed one.
  const int kmu = sim.bases.mu.count();
  Eigen::VectorXd beta_std = Eigen::VectorXd::LinSpaced(3 * kmu, -1.0, 1.0);
  const auto bt = back_transform(st.record, beta_std, kmu);
  const Eigen::MatrixXd x_std = fixed_effects_design(st.data, sim.bases.mu);
  const Eigen::MatrixXd x_raw = fixed_effects_design(sim.data, sim.bases.mu);
  for (std::size_t r = 0; r < 50; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const double original = st.record.response_mean + st.record.response_sd * x_std.row(i).dot(beta_std);
    const double back = bt.response_mean + sim.bases.mu.eval(sim.data.hour[r]).dot(bt.intercept) + x_raw.row(i).dot(bt.beta);
    EXPECT_NEAR(original, back, 1e-10);
  }
}

TEST(Standardize, ConstantCovariateIsRejected) {
  auto sim = small_sim("I", 1, 2, 5);
  sim.data.X.col(1).setConstant(4.0);
  try {
    standardize(sim.data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Whitening, GlsMatchesDenseGeneralizedLeastSquares) {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    const auto inst = fixtures::tiny_instance(seed);
    const auto obs = make_observation_model(inst.data, inst.bases);
    const auto sys = whiten_system(inst.params, inst.data, obs, Partition::single(inst.data.network.size()),
                                   distance_matrix(inst.data.network));
    const auto rows = fixtures::observed_rows(inst.data);
    const auto o = fixtures::to_oracle(inst, rows);
    const Eigen::MatrixXd sigma = oracle::joint_cov(fixtures::latent_law(inst), o);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(o.size()), inst.params.beta.size());
    Eigen::VectorXd y(x.rows());
    for (std::size_t i = 0; i < o.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = o[i].design.transpose();
      y(static_cast<Eigen::Index>(i)) = o[i].y;
    }
    const auto ldlt = sigma.ldlt();
    const Eigen::MatrixXd info = x.transpose() * ldlt.solve(x);
    EXPECT_LT((sys.design.transpose() * sys.design - info).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + info.cwiseAbs().maxCoeff()));
    // The whitened quadratic form reproduces the likelihood at any beta.
    const Eigen::VectorXd b = inst.params.beta * 0.3;
    const double dense = oracle::mvn_loglik(fixtures::latent_law(inst), o, b);
    EXPECT_NEAR(whitened_loglik(sys, b), dense, 1e-9 * std::max(1.0, std::abs(dense)));
    if (x.rows() >= x.cols() + 1 && info.fullPivLu().rank() == info.rows()) {
      const Eigen::VectorXd gls = info.ldlt().solve(x.transpose() * ldlt.solve(y));
      const auto sol = solve_gls(sys);
      if (!sol.rank_deficient) {
        EXPECT_LT((sol.beta - gls).cwiseAbs().maxCoeff(), 1e-7 * (1.0 + gls.cwiseAbs().maxCoeff()));
      }
    }
  }
}

TEST(Whitening, RankDeficientDesignGetsRidge) {
  WhitenedSystem sys;
  sys.design = Eigen::MatrixXd::Ones(10, 2);
  sys.response = Eigen::VectorXd::LinSpaced(10, 0.0, 1.0);
  sys.measurements = 10;
  const auto sol = solve_gls(sys);
  EXPECT_TRUE(sol.rank_deficient);
  EXPECT_GT(sol.ridge, 0.0);
  EXPECT_TRUE(sol.beta.allFinite());
}

TEST(Fit, EmIsMonotoneAndRecoversParameters) {
  const auto sim = small_sim("II", 12, 5, 60);
  const auto st = standardize(sim.data);
  const auto mle = fit_mle(st.data, sim.bases);
  ASSERT_GE(mle.loglik_trace.size(), 2u);
  for (std::size_t i = 1; i < mle.loglik_trace.size(); ++i)
    EXPECT_GE(mle.loglik_trace[i] - mle.loglik_trace[i - 1], -1e-8) << "iteration " << i;
  EXPECT_TRUE(mle.converged);
  EXPECT_EQ(mle.N, 5u * 60u);
  EXPECT_GT(mle.params.g.mean(), 0.6);
  EXPECT_LT(mle.params.g.maxCoeff(), 1.0);
  // Broad sampling bounds around the true range of 50 km.
  EXPECT_GT(mle.params.theta.minCoeff(), 10.0);
  EXPECT_LT(mle.params.theta.maxCoeff(), 250.0);
  // H0 is negative definite and equals -X~'X~ at the optimum.
  EXPECT_LT(mle.H0.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff(), 0.0);
}

TEST(Fit, NumericHessianAgreesWithExact) {
  const auto sim = small_sim("II", 21, 3, 20);
  const auto st = standardize(sim.data);
  FitOptions opts;
  opts.em_max_iter = 5;
  const auto mle = fit_mle(st.data, sim.bases, opts);
  opts.hessian_mode = HessianMode::numeric;
  const Eigen::MatrixXd numeric = compute_hessian(mle, st.data, sim.bases, opts);
  EXPECT_LT((numeric - mle.H0).cwiseAbs().maxCoeff(), 1e-4 * mle.H0.cwiseAbs().maxCoeff());
}

TEST(Fit, FixedWhiteNoiseReducesToOls) {
  const auto sim = small_sim("I", 8, 3, 10);
  FitOptions opts;
  opts.estimate_random_effects = false;
  opts.estimate_sigma2 = false;
  ModelParams init;
  init.g = Eigen::VectorXd::Zero(3);
  init.v = Eigen::VectorXd::Zero(3);
  init.theta = Eigen::VectorXd::Zero(3);
  init.sigma2 = Eigen::VectorXd::Ones(3);
  opts.initial = init;
  const auto mle = fit_mle(sim.data, sim.bases, opts);
  const Eigen::MatrixXd x = fixed_effects_design(sim.data, sim.bases.mu);
  const Eigen::VectorXd ols = oracle::ols(x, sim.data.y);
  EXPECT_LT((mle.beta0 - ols).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((mle.H0 + x.transpose() * x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Fit, PartitionedFitRunsPerBlock) {
  const auto sim = small_sim("III", 5, 6, 15);
  const auto st = standardize(sim.data);
  FitOptions opts;
  opts.partition_k = 2;
  opts.em_max_iter = 10;
  const auto mle = fit_mle(st.data, sim.bases, opts);
  EXPECT_EQ(mle.partition.k(), 2u);
  EXPECT_TRUE(std::isfinite(mle.loglik()));
}
