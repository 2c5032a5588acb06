/**
 * @file simulate.hpp
 * @brief Synthetic data under the three simulation settings and a Monte Carlo harness.
 */
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/crossval.hpp"
#include "fhdgm/dataset.hpp"
#include "fhdgm/statespace.hpp"

namespace fhdgm {

struct SimSetting {
  std::string name;
  std::string description;
  StationNetwork network;
  int days = 365;
  std::vector<double> hours;  // within-day grid
  Interval domain{0.0, 24.0};
  Eigen::MatrixXd sigma_x;    // p x p covariate covariance
  BasisSpec mu, omega, sigma;
  Eigen::VectorXd beta;       // K_mu coefficients shared by every covariate
  double theta = 0.0;         // km; 0 = spatially independent
  double g = 0.0;
  double v = 1.0;
  double sigma2 = 1.0;

  [[nodiscard]] int covariates() const { return static_cast<int>(sigma_x.rows()); }
  /// Throws parameter / stationarity errors.
  void validate() const;
  [[nodiscard]] BasisSet bases() const;
  [[nodiscard]] ModelParams truth() const;
};

/// Fifteen synthetic stations spread over roughly 200 km in northern Italy.
StationNetwork reference_network();

/// Settings I, II and III at full scale (15 stations, 365 days, hourly grid).
std::vector<SimSetting> builtin_settings();

/// Looks a built-in setting up by name ("I", "II", "III"); config error otherwise.
SimSetting builtin_setting(const std::string& name);

/// Keeps the first `n` stations and `days` days.
SimSetting rescale(SimSetting setting, int n, int days);

/// Desk-scale default: 5 stations, 60 days.
SimSetting desk_scale(SimSetting setting);

struct SimulatedData {
  FunctionalDataset data;
  BasisSet bases;
  ModelParams truth;                   // beta stacked over covariates
  std::vector<Eigen::MatrixXd> latent;  // per day: n x K_omega
};

SimulatedData simulate_dataset(const SimSetting& setting, std::uint64_t seed);

/// Independent seed of replication `rep`, derived from (seed, rep) only.
std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep);

struct MonteCarloOptions {
  int replications = 50;
  std::uint64_t seed = 1;
  PipelineOptions pipeline;
  /// Fraction of curves held out of every replication as an independent test set.
  double test_fraction = 0.1;
  int threads = 1;
  double max_failure_rate = 0.1;
};

struct ReplicationResult {
  int index = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd beta_mle;                    // original units
  std::array<Eigen::VectorXd, 4> beta_selected;  // criterion order
  std::array<double, 4> lambda_selected{};
  double test_rmse_mle = 0.0;
  std::array<double, 4> test_rmse{};
  std::vector<double> cv_rmse, cv_mae;
  std::vector<double> loglik_trace;
  double em_max_drop = 0.0;  // largest decrease between consecutive EM iterations
  int em_iterations = 0;
  ModelParams params;
};

struct CoefficientSummary {
  double truth = 0.0;
  double mean_mle = 0.0, sd_mle = 0.0;
  std::array<double, 4> mean{}, sd{}, zero_frequency{};
};

struct MonteCarloReport {
  std::string setting;
  int replications = 0;
  int failures = 0;
  std::vector<ReplicationResult> runs;
  std::vector<CoefficientSummary> coefficients;
  std::vector<double> lambdas;
  std::vector<double> rmse_mean, rmse_se, mae_mean, mae_se;
  std::array<std::vector<double>, 4> lambda_star;
  double test_rmse_mle_mean = 0.0;
  double test_rmse_min_mean = 0.0;
  /// Paired t statistic of (selected - unpenalized) test RMSE at the min-RMSE rule.
  double paired_t = 0.0;
};

ReplicationResult run_replication(const SimSetting& setting, const MonteCarloOptions& opts, int rep);

/// Failed replications are recorded and skipped; more than `max_failure_rate`
/// failures abort with a numeric error.
MonteCarloReport monte_carlo(const SimSetting& setting, const MonteCarloOptions& opts);

}  // namespace fhdgm
