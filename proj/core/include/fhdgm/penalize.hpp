/**
 * @file penalize.hpp
 * @brief Adaptive-LASSO solution of the quadratic surrogate and its lambda path.
 *
 * The surrogate replaces the log-likelihood in beta by its second-order
 * expansion around the ML point (exact for this model class). With
 * A = -H0 the penalized problem is
 *
 *     minimize  1/2 (beta - beta0)' A (beta - beta0) + N lambda sum_i w_i |beta_i|
 *
 * over all P scalar spline coefficients. A weight of zero leaves a
 * coefficient unpenalized (used for an optional functional intercept).
 */
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace fhdgm {

struct MLEResult;

inline constexpr double kWeightFloor = 1e-8;
inline constexpr double kKktTol = 1e-8;

struct QuadraticSurrogate {
  Eigen::VectorXd beta0;
  Eigen::MatrixXd H0;  // negative definite
  std::size_t N = 0;   // functional observations

  /// Throws shape / parameter errors on inconsistent dimensions, asymmetry or N == 0.
  void validate() const;
};

QuadraticSurrogate surrogate_from(const MLEResult& mle);

struct PenaltySpec {
  std::vector<double> lambda_grid;  // decreasing, last entry 0
  Eigen::VectorXd weights;
  double gamma = 1.0;
};

/// `count` log-equispaced values from lambda_max down to lambda_min, then 0.
std::vector<double> lambda_grid(double lambda_min, double lambda_max, int count);

/// w_i = 1 / max(|beta0_i|, w_floor)^gamma. Entries listed in `unpenalized` get weight 0.
Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& beta0, double gamma, double w_floor = kWeightFloor,
                                 const std::vector<Eigen::Index>& unpenalized = {});

struct SolverOptions {
  int max_sweeps = 100000;
  double tol = 1e-13;  // coordinate-descent stopping rule (relative change)
  double kkt_tol = kKktTol;
};

struct SolveResult {
  Eigen::VectorXd beta;
  int sweeps = 0;
  double kkt_residual = 0.0;
};

double objective(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda, const Eigen::VectorXd& beta);

/// Largest KKT violation of `beta`: |g_i + N lambda w_i sign(beta_i)| on the
/// active set and max(|g_i| - N lambda w_i, 0) elsewhere, g = A (beta - beta0).
double kkt_residual(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                    const Eigen::VectorXd& beta);

/// Smallest lambda at which every penalized coefficient is zero.
double lambda_zero(const QuadraticSurrogate& q, const Eigen::VectorXd& weights);

/// Cyclic coordinate descent with soft-thresholding, followed by an exact
/// solve on the active set. Throws a solver error when the KKT residual
/// stays above `opts.kkt_tol`.
SolveResult pmle_solve(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                       const std::optional<Eigen::VectorXd>& warm_start = std::nullopt, const SolverOptions& opts = {});

struct PathResult {
  std::vector<double> lambdas;  // grid order
  std::vector<Eigen::VectorXd> betas;
  std::vector<int> active;
  std::vector<int> sweeps;
  std::vector<double> kkt;
  double lambda_zero = 0.0;
};

/// Solves the grid from the largest lambda downwards with warm starts.
PathResult solution_path(const QuadraticSurrogate& q, const PenaltySpec& spec, const SolverOptions& opts = {});

}  // namespace fhdgm
