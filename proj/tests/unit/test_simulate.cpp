#include <cmath>

#include <gtest/gtest.h>

#include "fhdgm/error.hpp"
#include "fhdgm/simulate.hpp"

using namespace fhdgm;

TEST(Simulate, SettingsMatchTheirDefinitions) {
  const auto all = builtin_settings();
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].theta, 0.0);
  EXPECT_EQ(all[0].g, 0.0);
  EXPECT_EQ(all[1].theta, 50.0);
  EXPECT_EQ(all[1].g, 0.85);
  EXPECT_TRUE(all[1].sigma_x.isIdentity());
  EXPECT_DOUBLE_EQ(all[2].sigma_x(0, 1), 0.9);
  EXPECT_DOUBLE_EQ(all[2].sigma_x(0, 2), 0.7);
  EXPECT_DOUBLE_EQ(all[2].sigma_x(1, 2), 0.5);
  for (const auto& s : all) {
    EXPECT_EQ(s.network.size(), 15u);
    EXPECT_EQ(s.days, 365);
    EXPECT_EQ(s.hours.size(), 24u);
    EXPECT_EQ(s.beta.sum(), 4.0);
    EXPECT_EQ(s.beta.tail(3).cwiseAbs().sum(), 0.0);
  }
  EXPECT_THROW(builtin_setting("IV"), Error);
}

TEST(Simulate, DeskScaleShape) {
  const auto s = desk_scale(builtin_setting("III"));
  EXPECT_EQ(s.network.size(), 5u);
  EXPECT_EQ(s.days, 60);
  const auto sim = simulate_dataset(s, 1);
  EXPECT_EQ(sim.data.rows(), 5u * 60u * 24u);
  EXPECT_EQ(sim.data.covariates(), 3);
  EXPECT_EQ(sim.truth.beta.size(), 21);
  EXPECT_EQ(sim.latent.size(), 60u);
  EXPECT_THROW(rescale(builtin_setting("I"), 16, 10), Error);
}

TEST(Simulate, SeedDeterminism) {
  const auto s = rescale(builtin_setting("II"), 3, 10);
  const auto a = simulate_dataset(s, 5);
  const auto b = simulate_dataset(s, 5);
  const auto c = simulate_dataset(s, 6);
  EXPECT_EQ(a.data.y, b.data.y);
  EXPECT_EQ(a.data.X, b.data.X);
  EXPECT_NE(a.data.y, c.data.y);
  EXPECT_EQ(replication_seed(1, 2), replication_seed(1, 2));
  EXPECT_NE(replication_seed(1, 2), replication_seed(1, 3));
  EXPECT_NE(replication_seed(1, 2), replication_seed(2, 1));
}

TEST(Simulate, CovariateCorrelationAndResponseMoments) {
  const auto s = rescale(builtin_setting("III"), 15, 120);
  const auto sim = simulate_dataset(s, 8);
  const Eigen::MatrixXd x = sim.data.X;
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  EXPECT_NEAR(cov(0, 1), 0.9, 0.03);
  EXPECT_NEAR(cov(0, 2), 0.7, 0.03);
  EXPECT_NEAR(cov(1, 2), 0.5, 0.03);

  // Residuals after removing the true mean have variance close to sigma^2 + B'ΣB.
  const Eigen::MatrixXd design = fixed_effects_design(sim.data, sim.bases.mu);
  const Eigen::VectorXd r = sim.data.y - design * sim.truth.beta;
  double expected = 0.0;
  for (std::size_t i = 0; i < sim.data.rows(); ++i) {
    const Eigen::VectorXd b = sim.bases.omega.eval(sim.data.hour[i]);
    expected += 1.0 + b.squaredNorm() * s.v / (1.0 - s.g * s.g);
  }
  expected /= static_cast<double>(sim.data.rows());
  EXPECT_NEAR(r.squaredNorm() / static_cast<double>(r.size()), expected, 0.15 * expected);
}

TEST(Simulate, LatentStatesFollowTheAutoregression) {
  auto s = rescale(builtin_setting("II"), 1, 4000);
  s.g = 0.7;
  const auto sim = simulate_dataset(s, 3);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 1; t < sim.latent.size(); ++t) {
    num += sim.latent[t](0, 0) * sim.latent[t - 1](0, 0);
    den += sim.latent[t - 1](0, 0) * sim.latent[t - 1](0, 0);
  }
  EXPECT_NEAR(num / den, 0.7, 0.04);
}
