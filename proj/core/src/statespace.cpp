#include "fhdgm/statespace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fhdgm/error.hpp"

namespace fhdgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
  return out;
}

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

// z' a for measurement row i (z has K_omega non-zeros).
template <typename Vec>
double loading_dot(const StateSpaceForm& ssf, std::size_t i, const Vec& a) {
  double acc = 0.0;
  const auto row = static_cast<Eigen::Index>(i);
  const int s = ssf.local_station[i];
  for (int k = 0; k < ssf.k_omega; ++k) acc += ssf.loading(row, k) * a(ssf.state_index(k, s));
  return acc;
}

}  // namespace

void ModelParams::validate(const BasisSet& bases, Eigen::Index n_beta) const {
  const int ko = bases.omega.count();
  if (beta.size() != n_beta) {
    fail(ErrorKind::shape, "beta has length " + std::to_string(beta.size()) + ", design has " + std::to_string(n_beta) + " columns");
  }
  if (g.size() != ko || v.size() != ko || theta.size() != ko) {
    fail(ErrorKind::shape, "g, v and theta must have one entry per random-effect basis (" + std::to_string(ko) + ")");
  }
  if (sigma2.size() != bases.sigma.count()) {
    fail(ErrorKind::shape, "sigma2 must have one entry per error-variance basis (" + std::to_string(bases.sigma.count()) + ")");
  }
  for (int k = 0; k < ko; ++k) {
    if (!(std::abs(g(k)) < 1.0)) fail(ErrorKind::stationarity, "|g_" + std::to_string(k) + "| = " + std::to_string(std::abs(g(k))) + " is not below 1");
    if (!(v(k) >= 0.0) || !std::isfinite(v(k))) fail(ErrorKind::parameter, "innovation variance v_" + std::to_string(k) + " must be non-negative");
    if (!(theta(k) >= 0.0) || !std::isfinite(theta(k))) fail(ErrorKind::parameter, "spatial range theta_" + std::to_string(k) + " must be non-negative");
  }
  if (!beta.allFinite() || !sigma2.allFinite()) fail(ErrorKind::numeric, "non-finite beta or sigma2");
}

ObservationModel make_observation_model(const FunctionalDataset& data, const BasisSet& bases, bool intercept) {
  data.validate_domain(bases.mu);
  data.validate_domain(bases.omega);
  data.validate_domain(bases.sigma);
  ObservationModel obs;
  obs.intercept = intercept;
  obs.design = fixed_effects_design(data, bases.mu, intercept);
  obs.omega_basis = bases.omega.eval_matrix(data.hour);
  obs.sigma_basis = bases.sigma.eval_matrix(data.hour);
  return obs;
}

Eigen::MatrixXd block_correlation(const Eigen::MatrixXd& distances, double theta, double jitter) {
  if (theta == 0.0) {
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(distances.rows(), distances.cols());
    id.diagonal().array() += jitter;
    return id;
  }
  return exp_correlation(distances, theta, jitter);
}

StateSpaceForm build_state_space(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                                 const std::vector<std::size_t>& stations, const Eigen::MatrixXd& distances,
                                 std::span<const char> row_mask, double jitter) {
  const int ko = static_cast<int>(obs.omega_basis.cols());
  if (params.g.size() != ko || params.v.size() != ko || params.theta.size() != ko) {
    fail(ErrorKind::shape, "random-effect parameters do not match the omega basis");
  }
  if (params.sigma2.size() != obs.sigma_basis.cols()) fail(ErrorKind::shape, "sigma2 does not match the sigma basis");
  if (params.beta.size() != obs.design.cols()) fail(ErrorKind::shape, "beta does not match the design");
  for (int k = 0; k < ko; ++k) {
    if (!(std::abs(params.g(k)) < 1.0)) {
      fail(ErrorKind::stationarity, "|g_" + std::to_string(k) + "| = " + std::to_string(std::abs(params.g(k))) + " is not below 1");
    }
    if (!(params.v(k) >= 0.0)) fail(ErrorKind::parameter, "innovation variance must be non-negative");
  }
  if (!row_mask.empty() && row_mask.size() != data.rows()) fail(ErrorKind::shape, "row mask length differs from dataset rows");
  if (static_cast<std::size_t>(distances.rows()) != stations.size()) fail(ErrorKind::shape, "distance matrix does not match block stations");

  StateSpaceForm ssf;
  ssf.stations = stations;
  ssf.k_omega = ko;
  ssf.days = data.days;
  const Eigen::Index n = ssf.n_local();
  const Eigen::Index m = n * ko;
  ssf.state_dim = m;
  ssf.transition.resize(m);
  ssf.innovation_cov = Eigen::MatrixXd::Zero(m, m);
  ssf.initial_cov = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < ko; ++k) {
    const Eigen::MatrixXd rho = block_correlation(distances, params.theta(k), jitter);
    ssf.transition.segment(k * n, n).setConstant(params.g(k));
    ssf.innovation_cov.block(k * n, k * n, n, n) = params.v(k) * rho;
    ssf.initial_cov.block(k * n, k * n, n, n) = params.v(k) / (1.0 - params.g(k) * params.g(k)) * rho;
  }

  std::vector<int> local(data.network.size(), -1);
  for (std::size_t i = 0; i < stations.size(); ++i) local[stations[i]] = static_cast<int>(i);

  ssf.time_begin.assign(static_cast<std::size_t>(data.days) + 1, 0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const int s = local[static_cast<std::size_t>(data.station[r])];
    if (s < 0 || !data.observed(r) || (!row_mask.empty() && !row_mask[r])) continue;
    ssf.rows.push_back(r);
    ssf.local_station.push_back(s);
    ssf.time_begin[static_cast<std::size_t>(data.day[r]) + 1]++;
  }
  for (std::size_t t = 0; t < static_cast<std::size_t>(data.days); ++t) ssf.time_begin[t + 1] += ssf.time_begin[t];

  const auto nm = static_cast<Eigen::Index>(ssf.rows.size());
  ssf.loading.resize(nm, ko);
  ssf.noise_var.resize(nm);
  ssf.response.resize(nm);
  ssf.design.resize(nm, obs.design.cols());
  for (Eigen::Index i = 0; i < nm; ++i) {
    const auto r = static_cast<Eigen::Index>(ssf.rows[static_cast<std::size_t>(i)]);
    ssf.loading.row(i) = obs.omega_basis.row(r);
    const double s2 = obs.sigma_basis.row(r).dot(params.sigma2);
    if (!(s2 > 0.0)) {
      fail(ErrorKind::variance, "error variance sigma^2(h) = " + std::to_string(s2) + " at hour " +
                                    std::to_string(data.hour[static_cast<std::size_t>(r)]) + " is not positive");
    }
    ssf.noise_var(i) = s2;
    ssf.response(i) = data.y(r);
    ssf.design.row(i) = obs.design.row(r);
  }
  ssf.offset = ssf.design * params.beta;
  return ssf;
}

StateSpaceForm build_state_space(const ModelParams& params, const FunctionalDataset& data, const BasisSet& bases,
                                 bool intercept) {
  const ObservationModel obs = make_observation_model(data, bases, intercept);
  const Partition all = Partition::single(data.network.size());
  return build_state_space(params, data, obs, all.groups[0], distance_matrix(data.network));
}

std::vector<StateSpaceForm> build_blocks(const ModelParams& params, const FunctionalDataset& data,
                                         const ObservationModel& obs, const Partition& partition,
                                         const Eigen::MatrixXd& distances, std::span<const char> row_mask,
                                         double jitter) {
  std::vector<StateSpaceForm> blocks;
  blocks.reserve(partition.k());
  for (const auto& group : partition.groups) {
    blocks.push_back(build_state_space(params, data, obs, group, submatrix(distances, group), row_mask, jitter));
  }
  return blocks;
}

KalmanGains kalman_gains(const StateSpaceForm& ssf, double steady_state_tol) {
  const Eigen::Index m = ssf.state_dim;
  const auto nm = static_cast<Eigen::Index>(ssf.measurements());
  KalmanGains out;
  out.predicted_cov.reserve(static_cast<std::size_t>(ssf.days));
  out.filtered_cov.reserve(static_cast<std::size_t>(ssf.days));
  out.gain.resize(nm, m);
  out.innovation_var.resize(nm);

  Eigen::MatrixXd p = ssf.initial_cov;
  Eigen::VectorXd u(m);
  bool steady = false;
  for (int t = 0; t < ssf.days; ++t) {
    const auto tb = ssf.time_begin[static_cast<std::size_t>(t)];
    const auto te = ssf.time_begin[static_cast<std::size_t>(t) + 1];

    if (steady_state_tol > 0.0 && t > 0) {
      const auto pb = ssf.time_begin[static_cast<std::size_t>(t) - 1];
      bool same_layout = (te - tb) == (tb - pb);
      for (std::size_t j = 0; same_layout && j < te - tb; ++j) {
        same_layout = ssf.local_station[tb + j] == ssf.local_station[pb + j] &&
                      ssf.loading.row(static_cast<Eigen::Index>(tb + j)) == ssf.loading.row(static_cast<Eigen::Index>(pb + j)) &&
                      ssf.noise_var(static_cast<Eigen::Index>(tb + j)) == ssf.noise_var(static_cast<Eigen::Index>(pb + j));
      }
      if (!same_layout) {
        steady = false;
      } else if (!steady) {
        const Eigen::MatrixXd& prev = out.predicted_cov.back();
        const double scale = std::max(prev.cwiseAbs().maxCoeff(), 1e-300);
        steady = (p - prev).cwiseAbs().maxCoeff() <= steady_state_tol * scale;
      }
      if (steady) {
        out.predicted_cov.push_back(out.predicted_cov.back());
        out.filtered_cov.push_back(out.filtered_cov.back());
        for (std::size_t j = 0; j < te - tb; ++j) {
          const auto cur = static_cast<Eigen::Index>(tb + j), old = static_cast<Eigen::Index>(pb + j);
          out.gain.row(cur) = out.gain.row(old);
          out.innovation_var(cur) = out.innovation_var(old);
          out.log_det += std::log(out.innovation_var(cur));
        }
        out.steady_days++;
        p = out.predicted_cov.back();
        continue;
      }
    }

    out.predicted_cov.push_back(p);
    for (auto i = tb; i < te; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int s = ssf.local_station[i];
      u.setZero();
      for (int k = 0; k < ssf.k_omega; ++k) u += ssf.loading(row, k) * p.col(ssf.state_index(k, s));
      const double zpz = loading_dot(ssf, i, u);
      const double f = zpz + ssf.noise_var(row);
      if (!(f > 0.0) || !std::isfinite(f)) {
        fail(ErrorKind::numeric, "non-positive innovation variance at day " + std::to_string(t));
      }
      const Eigen::VectorXd gain = u / f;
      // Joseph form (I - k z') P (I - k z')' + k r k', expanded with z'P = u'.
      p.noalias() -= gain * u.transpose();
      p.noalias() -= u * gain.transpose();
      p.noalias() += (zpz + ssf.noise_var(row)) * gain * gain.transpose();
      symmetrize(p);
      out.gain.row(row) = gain.transpose();
      out.innovation_var(row) = f;
      out.log_det += std::log(f);
    }
    if (!p.allFinite()) fail(ErrorKind::numeric, "non-finite filtered covariance at day " + std::to_string(t));
    out.filtered_cov.push_back(p);
    p = ssf.transition.asDiagonal() * p * ssf.transition.asDiagonal();
    p += ssf.innovation_cov;
  }
  return out;
}

Eigen::MatrixXd filter_innovations(const StateSpaceForm& ssf, const KalmanGains& gains, const Eigen::MatrixXd& data,
                                   std::vector<Eigen::MatrixXd>* predicted_means) {
  const Eigen::Index m = ssf.state_dim;
  const Eigen::Index c = data.cols();
  if (data.rows() != static_cast<Eigen::Index>(ssf.measurements())) fail(ErrorKind::shape, "data rows differ from measurements");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, c);
  Eigen::MatrixXd innov(data.rows(), c);
  Eigen::RowVectorXd v(c);
  if (predicted_means) {
    predicted_means->clear();
    predicted_means->reserve(static_cast<std::size_t>(ssf.days));
  }
  for (int t = 0; t < ssf.days; ++t) {
    if (predicted_means) predicted_means->push_back(a);
    for (auto i = ssf.time_begin[static_cast<std::size_t>(t)]; i < ssf.time_begin[static_cast<std::size_t>(t) + 1]; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int s = ssf.local_station[i];
      v = data.row(row);
      for (int k = 0; k < ssf.k_omega; ++k) v.noalias() -= ssf.loading(row, k) * a.row(ssf.state_index(k, s));
      if (!v.allFinite()) fail(ErrorKind::numeric, "non-finite innovation at day " + std::to_string(t));
      a.noalias() += gains.gain.row(row).transpose() * v;
      innov.row(row) = v;
    }
    a = ssf.transition.asDiagonal() * a;
  }
  return innov;
}

double innovations_loglik(const KalmanGains& gains, const Eigen::Ref<const Eigen::VectorXd>& innovations) {
  const auto n = static_cast<double>(innovations.size());
  const double quad = (innovations.array().square() / gains.innovation_var.array()).sum();
  return -0.5 * (n * kLog2Pi + gains.log_det + quad);
}

Eigen::MatrixXd whiten(const StateSpaceForm& ssf, const KalmanGains& gains, const Eigen::MatrixXd& data) {
  Eigen::MatrixXd innov = filter_innovations(ssf, gains, data);
  return gains.innovation_var.array().rsqrt().matrix().asDiagonal() * innov;
}

std::vector<Eigen::MatrixXd> smooth_means(const StateSpaceForm& ssf, const KalmanGains& gains,
                                          const Eigen::MatrixXd& data) {
  std::vector<Eigen::MatrixXd> predicted;
  const Eigen::MatrixXd innov = filter_innovations(ssf, gains, data, &predicted);
  const Eigen::Index m = ssf.state_dim;
  const Eigen::Index c = data.cols();
  std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(ssf.days));
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m, c);
  Eigen::RowVectorXd kr(c);
  for (int t = ssf.days - 1; t >= 0; --t) {
    const auto tb = ssf.time_begin[static_cast<std::size_t>(t)];
    for (auto i = ssf.time_begin[static_cast<std::size_t>(t) + 1]; i-- > tb;) {
      const auto row = static_cast<Eigen::Index>(i);
      const int s = ssf.local_station[i];
      kr.noalias() = gains.gain.row(row) * r;
      const Eigen::RowVectorXd w = innov.row(row) / gains.innovation_var(row) - kr;
      for (int k = 0; k < ssf.k_omega; ++k) r.row(ssf.state_index(k, s)) += ssf.loading(row, k) * w;
    }
    means[static_cast<std::size_t>(t)] = predicted[static_cast<std::size_t>(t)] + gains.predicted_cov[static_cast<std::size_t>(t)] * r;
    r = ssf.transition.asDiagonal() * r;
  }
  return means;
}

FilterResult kalman_filter(const StateSpaceForm& ssf) {
  const KalmanGains gains = kalman_gains(ssf);
  FilterResult out;
  std::vector<Eigen::MatrixXd> predicted;
  const Eigen::MatrixXd resid = ssf.response - ssf.offset;
  out.innovations = filter_innovations(ssf, gains, resid, &predicted).col(0);
  out.innovation_var = gains.innovation_var;
  out.loglik = innovations_loglik(gains, out.innovations);
  out.filtered_covs = gains.filtered_cov;
  for (int t = 0; t < ssf.days; ++t) {
    Eigen::VectorXd a = predicted[static_cast<std::size_t>(t)].col(0);
    for (auto i = ssf.time_begin[static_cast<std::size_t>(t)]; i < ssf.time_begin[static_cast<std::size_t>(t) + 1]; ++i) {
      a += gains.gain.row(static_cast<Eigen::Index>(i)).transpose() * out.innovations(static_cast<Eigen::Index>(i));
    }
    out.predicted_means.push_back(predicted[static_cast<std::size_t>(t)].col(0));
    out.filtered_means.push_back(std::move(a));
  }
  return out;
}

SmootherResult kalman_smoother(const StateSpaceForm& ssf, const KalmanGains* gains_in) {
  KalmanGains local;
  if (!gains_in) local = kalman_gains(ssf);
  const KalmanGains& gains = gains_in ? *gains_in : local;
  const Eigen::Index m = ssf.state_dim;
  const auto days = static_cast<std::size_t>(ssf.days);

  SmootherResult out;
  const Eigen::MatrixXd resid = ssf.response - ssf.offset;
  std::vector<Eigen::MatrixXd> predicted;
  const Eigen::VectorXd innov = filter_innovations(ssf, gains, resid, &predicted).col(0);
  out.loglik = innovations_loglik(gains, innov);
  out.means.resize(days);
  out.covs.resize(days);
  out.lag_one.resize(days > 0 ? days - 1 : 0);

  Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd nmat = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd n_next;  // N at the start of day t+1
  Eigen::VectorXd u(m);
  for (std::size_t t = days; t-- > 0;) {
    const auto tb = ssf.time_begin[t], te = ssf.time_begin[t + 1];
    const Eigen::MatrixXd& p = gains.predicted_cov[t];

    if (t + 1 < days) {
      // Cov(z_t, z_{t+1} | y) = P_t L_t' (I - N_{t+1} P_{t+1}), L_t' = L_{t,1}' ... L_{t,q}' G'.
      Eigen::MatrixXd mm = p;
      for (auto i = tb; i < te; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int s = ssf.local_station[i];
        Eigen::VectorXd mz = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < ssf.k_omega; ++k) mz += ssf.loading(row, k) * mm.col(ssf.state_index(k, s));
        mm.noalias() -= mz * gains.gain.row(row);
      }
      mm = mm * ssf.transition.asDiagonal();
      const Eigen::MatrixXd& p_next = gains.predicted_cov[t + 1];
      const Eigen::MatrixXd cross = mm - mm * (n_next * p_next);
      out.lag_one[t] = cross.transpose();
    }

    for (auto i = te; i-- > tb;) {
      const auto row = static_cast<Eigen::Index>(i);
      const int s = ssf.local_station[i];
      const double f = gains.innovation_var(row);
      const auto k = gains.gain.row(row).transpose();
      const double kr = k.dot(r);
      const double w = innov(row) / f - kr;
      for (int b = 0; b < ssf.k_omega; ++b) r(ssf.state_index(b, s)) += ssf.loading(row, b) * w;

      // N <- z z'/f + (I - z k') N (I - k z')
      u.noalias() = nmat * k;
      const double knk = k.dot(u);
      for (int b = 0; b < ssf.k_omega; ++b) {
        const Eigen::Index ib = ssf.state_index(b, s);
        const double zb = ssf.loading(row, b);
        nmat.row(ib) -= zb * u.transpose();
        nmat.col(ib) -= zb * u;
      }
      for (int b = 0; b < ssf.k_omega; ++b) {
        for (int c = 0; c < ssf.k_omega; ++c) {
          nmat(ssf.state_index(b, s), ssf.state_index(c, s)) +=
              ssf.loading(row, b) * ssf.loading(row, c) * (knk + 1.0 / f);
        }
      }
    }
    out.means[t] = predicted[t].col(0) + p * r;
    Eigen::MatrixXd v = p - p * nmat * p;
    symmetrize(v);
    out.covs[t] = std::move(v);
    n_next = nmat;
    r = ssf.transition.asDiagonal() * r;
    nmat = ssf.transition.asDiagonal() * nmat * ssf.transition.asDiagonal();
  }
  return out;
}

Eigen::VectorXd predict(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                        const Partition& partition, const Eigen::MatrixXd& distances,
                        std::span<const std::size_t> targets) {
  std::vector<char> mask(data.rows(), 1);
  for (auto r : targets) {
    if (r >= data.rows()) fail(ErrorKind::lookup, "prediction target row " + std::to_string(r) + " does not exist");
    mask[r] = 0;
  }
  std::vector<int> block_of(data.network.size(), -1), local_of(data.network.size(), -1);
  for (std::size_t g = 0; g < partition.k(); ++g) {
    for (std::size_t i = 0; i < partition.groups[g].size(); ++i) {
      block_of[partition.groups[g][i]] = static_cast<int>(g);
      local_of[partition.groups[g][i]] = static_cast<int>(i);
    }
  }
  const auto blocks = build_blocks(params, data, obs, partition, distances, mask);
  std::vector<std::vector<Eigen::MatrixXd>> smoothed(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const KalmanGains gains = kalman_gains(blocks[b]);
    smoothed[b] = smooth_means(blocks[b], gains, blocks[b].response - blocks[b].offset);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto r = targets[j];
    const auto st = static_cast<std::size_t>(data.station[r]);
    const auto b = static_cast<std::size_t>(block_of[st]);
    const auto& mean = smoothed[b][static_cast<std::size_t>(data.day[r])];
    double y = obs.design.row(static_cast<Eigen::Index>(r)).dot(params.beta);
    for (int k = 0; k < blocks[b].k_omega; ++k) {
      y += obs.omega_basis(static_cast<Eigen::Index>(r), k) * mean(blocks[b].state_index(k, local_of[st]), 0);
    }
    out(static_cast<Eigen::Index>(j)) = y;
  }
  return out;
}

Eigen::VectorXd predict(const ModelParams& params, const FunctionalDataset& data, const BasisSet& bases,
                        std::span<const std::size_t> targets, bool intercept) {
  const ObservationModel obs = make_observation_model(data, bases, intercept);
  return predict(params, data, obs, Partition::single(data.network.size()), distance_matrix(data.network), targets);
}

double loglik(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
              const Partition& partition, const Eigen::MatrixXd& distances) {
  double total = 0.0;
  for (const auto& block : build_blocks(params, data, obs, partition, distances)) {
    const KalmanGains gains = kalman_gains(block);
    const Eigen::MatrixXd resid = block.response - block.offset;
    total += innovations_loglik(gains, filter_innovations(block, gains, resid).col(0));
  }
  return total;
}

}  // namespace fhdgm
