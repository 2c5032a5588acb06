/**
 * @file statespace.hpp
 * @brief Linear-Gaussian state-space form of the functional geostatistical model.
 *
 * Observation (s, t, h):
 *     y = x(s,t,h)' beta + sum_k B_{k,omega}(h) z_{s,t,k} + eps,   eps ~ N(0, sigma^2(h))
 * State, one n-vector per random-effect basis k:
 *     z_{.,t,k} = g_k z_{.,t-1,k} + eta_{t,k},   eta_{t,k} ~ N(0, v_k rho(D; theta_k))
 *
 * The state vector stacks z_{.,t,k} block by block, so station s and basis k
 * live at index k * n + s. Observations within a day are processed one at a
 * time (sequential univariate updates), which is exact because the
 * measurement noise is diagonal. The covariance recursion does not depend on
 * the data values, so it is computed once (KalmanGains) and reused for any
 * number of mean passes: likelihood, design whitening, smoothing, kriging.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/basis.hpp"
#include "fhdgm/dataset.hpp"
#include "fhdgm/spatial.hpp"

namespace fhdgm {

struct BasisSet {
  BasisSystem mu;
  BasisSystem omega;
  BasisSystem sigma;
};

/// beta and the random-effect / error parameters. A theta_k of exactly zero
/// means spatially independent innovations (identity correlation).
struct ModelParams {
  Eigen::VectorXd beta;
  Eigen::VectorXd g;
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  Eigen::VectorXd sigma2;

  /// Throws stationarity / parameter / shape errors.
  void validate(const BasisSet& bases, Eigen::Index n_beta) const;
};

/// Per-row quantities shared by every state-space block built on a dataset.
struct ObservationModel {
  Eigen::MatrixXd design;       // rows x P
  Eigen::MatrixXd omega_basis;  // rows x K_omega
  Eigen::MatrixXd sigma_basis;  // rows x K_sigma
  bool intercept = false;
};

ObservationModel make_observation_model(const FunctionalDataset& data, const BasisSet& bases, bool intercept = false);

struct StateSpaceForm {
  std::vector<std::size_t> stations;  // global station indices of this block
  int k_omega = 0;
  int days = 0;
  Eigen::Index state_dim = 0;

  Eigen::VectorXd transition;      // diagonal of the transition matrix
  Eigen::MatrixXd innovation_cov;  // Q
  Eigen::MatrixXd initial_cov;     // stationary covariance of z_1

  // Measurement rows (observed and unmasked only), ordered by (day, station, hour).
  std::vector<std::size_t> rows;        // dataset row index
  std::vector<std::size_t> time_begin;  // rows of day t: [time_begin[t], time_begin[t+1])
  std::vector<int> local_station;
  Eigen::MatrixXd loading;    // B_omega(h) per measurement row
  Eigen::VectorXd noise_var;  // sigma^2(h)
  Eigen::VectorXd response;   // y
  Eigen::MatrixXd design;     // fixed-effects rows
  Eigen::VectorXd offset;     // design * beta

  [[nodiscard]] std::size_t measurements() const noexcept { return rows.size(); }
  [[nodiscard]] Eigen::Index n_local() const noexcept { return static_cast<Eigen::Index>(stations.size()); }
  [[nodiscard]] Eigen::Index state_index(int k, int local_station) const noexcept {
    return static_cast<Eigen::Index>(k) * n_local() + local_station;
  }
};

/// Correlation of the block's stations for range theta (identity when theta == 0).
Eigen::MatrixXd block_correlation(const Eigen::MatrixXd& distances, double theta, double jitter = 0.0);

/// Builds the state-space form for the stations in `stations`. `distances`
/// is the distance matrix among those stations. `row_mask`, when non-empty,
/// marks dataset rows allowed to enter as measurements (1) or treated as
/// missing (0).
StateSpaceForm build_state_space(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                                 const std::vector<std::size_t>& stations, const Eigen::MatrixXd& distances,
                                 std::span<const char> row_mask = {}, double jitter = 0.0);

/// Single-block convenience overload over the whole network.
StateSpaceForm build_state_space(const ModelParams& params, const FunctionalDataset& data, const BasisSet& bases,
                                 bool intercept = false);

/// One state-space block per partition group.
std::vector<StateSpaceForm> build_blocks(const ModelParams& params, const FunctionalDataset& data,
                                         const ObservationModel& obs, const Partition& partition,
                                         const Eigen::MatrixXd& distances, std::span<const char> row_mask = {},
                                         double jitter = 0.0);

/// Data-independent part of the filter.
struct KalmanGains {
  std::vector<Eigen::MatrixXd> predicted_cov;  // P_{t|t-1}
  std::vector<Eigen::MatrixXd> filtered_cov;   // P_{t|t}
  Eigen::MatrixXd gain;                        // measurements x m; row i = P z_i / f_i
  Eigen::VectorXd innovation_var;              // f_i
  double log_det = 0.0;                        // sum_i log f_i
  int steady_days = 0;                         // days whose gains were copied
};

/// `steady_state_tol` > 0 enables the steady-state approximation: once the
/// predicted covariance stops moving (max-abs relative change below the
/// tolerance) on days with identical observation layout, the previous day's
/// gains are reused.
KalmanGains kalman_gains(const StateSpaceForm& ssf, double steady_state_tol = 0.0);

struct FilterResult {
  Eigen::VectorXd innovations;
  Eigen::VectorXd innovation_var;
  std::vector<Eigen::VectorXd> predicted_means;
  std::vector<Eigen::VectorXd> filtered_means;
  std::vector<Eigen::MatrixXd> filtered_covs;
  double loglik = 0.0;
};

FilterResult kalman_filter(const StateSpaceForm& ssf);

/// Innovations of several data columns (measurements x C) under shared gains.
/// When `predicted_means` is non-null it receives the m x C predicted state
/// means of every day.
Eigen::MatrixXd filter_innovations(const StateSpaceForm& ssf, const KalmanGains& gains, const Eigen::MatrixXd& data,
                                   std::vector<Eigen::MatrixXd>* predicted_means = nullptr);

/// Gaussian log-likelihood from innovations of a single data column.
double innovations_loglik(const KalmanGains& gains, const Eigen::Ref<const Eigen::VectorXd>& innovations);

/// Innovations scaled by 1/sqrt(f): the whitened version of each column.
Eigen::MatrixXd whiten(const StateSpaceForm& ssf, const KalmanGains& gains, const Eigen::MatrixXd& data);

/// Smoothed state means (m x C per day) for several data columns.
std::vector<Eigen::MatrixXd> smooth_means(const StateSpaceForm& ssf, const KalmanGains& gains,
                                          const Eigen::MatrixXd& data);

struct SmootherResult {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<Eigen::MatrixXd> lag_one;  // lag_one[t] = Cov(z_{t+1}, z_t | y), t = 0..T-2
  double loglik = 0.0;
};

/// Fixed-interval smoother (backward r/N recursions, no inverse of P needed)
/// applied to response - offset.
SmootherResult kalman_smoother(const StateSpaceForm& ssf, const KalmanGains* gains = nullptr);

/// Kriging predictions at dataset rows: x'beta + B_omega(h)' E[z_{s,t} | y]
/// where the responses of `targets` are masked out of the conditioning set.
Eigen::VectorXd predict(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                        const Partition& partition, const Eigen::MatrixXd& distances,
                        std::span<const std::size_t> targets);

Eigen::VectorXd predict(const ModelParams& params, const FunctionalDataset& data, const BasisSet& bases,
                        std::span<const std::size_t> targets, bool intercept = false);

/// Sum of per-block exact log-likelihoods.
double loglik(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
              const Partition& partition, const Eigen::MatrixXd& distances);

}  // namespace fhdgm
