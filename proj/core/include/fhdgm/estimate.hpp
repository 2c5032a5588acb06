/**
 * @file estimate.hpp
 * @brief Standardization, maximum-likelihood fitting by EM, and the Hessian in beta.
 *
 * For fixed random-effect and error parameters the log-likelihood is exactly
 * quadratic in beta. Whitening the response and every design column with the
 * Kalman innovations (innovation / sqrt(innovation variance)) turns the
 * likelihood into
 *
 *     L(beta) = -1/2 [ M log(2 pi) + sum log f + || y~ - X~ beta ||^2 ],
 *
 * so GLS is ordinary least squares on (X~, y~) and the Hessian is -X~'X~.
 *
 * EM iteration (each step is monotone in the likelihood):
 *   1. beta <- GLS(theta)                      exact maximization in beta
 *   2. E-step: smoothed state moments at (beta, theta)
 *   3. M-step: sigma^2 coefficients by Fisher scoring with step halving,
 *      theta_k by golden section on log theta with v_k profiled out,
 *      g_k by the real roots of the profile-likelihood cubic, v_k closed form.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/dataset.hpp"
#include "fhdgm/spatial.hpp"
#include "fhdgm/statespace.hpp"

namespace fhdgm {

struct StandardizationRecord {
  std::vector<std::string> covariate_names;
  std::vector<double> covariate_mean;
  std::vector<double> covariate_sd;
  double response_mean = 0.0;
  double response_sd = 1.0;
};

struct StandardizedData {
  FunctionalDataset data;
  StandardizationRecord record;
};

/// Centers and scales every covariate and the response by their overall
/// (pooled over stations, days and hours) sample mean and standard deviation.
StandardizedData standardize(const FunctionalDataset& data);

/// Applies an existing record to new data with the same covariates.
FunctionalDataset apply_standardization(const FunctionalDataset& data, const StandardizationRecord& record);

/// Coefficients on the original measurement scale. The fitted curve is
///     y(h) = response_mean + B(h)' intercept + sum_j X_j(h) B(h)' beta_j.
struct BackTransformed {
  Eigen::VectorXd beta;       // p * K_mu, original units
  double response_mean = 0.0;
  Eigen::VectorXd intercept;  // K_mu coefficients of the functional intercept
};

/// `beta` may carry a trailing unpenalized intercept block (intercept = true).
BackTransformed back_transform(const StandardizationRecord& record, const Eigen::VectorXd& beta, int k_mu,
                               bool intercept = false);

enum class HessianMode { exact, numeric };

struct FitOptions {
  double em_tol = 1e-4;
  int em_max_iter = 200;
  int partition_k = 1;
  HessianMode hessian_mode = HessianMode::exact;
  double hessian_fd_step = 1e-4;
  bool intercept = false;
  bool estimate_random_effects = true;
  bool estimate_sigma2 = true;
  /// 0 disables the steady-state gain approximation used for whitening.
  double steady_state_tol = 0.0;
  double sigma2_floor = 1e-6;
  double g_bound = 1e-6;  // g is kept inside (-1 + g_bound, 1 - g_bound)
  double theta_min_km = 1.0;
  double theta_max_km = 1e4;
  double jitter = 0.0;
  int threads = 1;
  /// Starting values; an empty beta is allowed since beta is solved first.
  std::optional<ModelParams> initial;
};

struct MLEResult {
  Eigen::VectorXd beta0;
  ModelParams params;  // theta0 (beta == beta0)
  std::vector<double> loglik_trace;
  Eigen::MatrixXd H0;
  double ridge = 0.0;
  bool rank_deficient = false;
  std::size_t N = 0;  // functional observations (station, day) with data
  int iterations = 0;
  bool converged = false;
  bool stationarity_projected = false;
  Partition partition;
  bool intercept = false;
  double steady_state_tol = 0.0;
  double jitter = 0.0;

  [[nodiscard]] double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

/// Response and design stacked over blocks after innovation whitening.
struct WhitenedSystem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  double log_det = 0.0;
  std::size_t measurements = 0;
};

WhitenedSystem whiten_system(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                             const Partition& partition, const Eigen::MatrixXd& distances,
                             std::span<const char> row_mask = {}, double steady_state_tol = 0.0, double jitter = 0.0,
                             int threads = 1);

double whitened_loglik(const WhitenedSystem& sys, const Eigen::VectorXd& beta);

struct GlsSolution {
  Eigen::VectorXd beta;
  Eigen::MatrixXd hessian;  // -X~'X~ (minus ridge, when applied)
  double ridge = 0.0;
  bool rank_deficient = false;
};

GlsSolution solve_gls(const WhitenedSystem& sys);

/// Number of (station, day) curves with at least one observed, unmasked response.
std::size_t functional_count(const FunctionalDataset& data, std::span<const char> row_mask = {});

MLEResult fit_mle(const FunctionalDataset& data, const BasisSet& bases, const FitOptions& opts = {});

/// Hessian of the log-likelihood in beta at (beta0, theta0). Exact mode is
/// -X~'X~; numeric mode is a central-difference Hessian of the filter
/// log-likelihood with step `opts.hessian_fd_step`.
Eigen::MatrixXd compute_hessian(const MLEResult& mle, const FunctionalDataset& data, const BasisSet& bases,
                                const FitOptions& opts);

}  // namespace fhdgm
