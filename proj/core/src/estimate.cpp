#include "fhdgm/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fhdgm/error.hpp"
#include "fhdgm/parallel.hpp"

namespace fhdgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
  return out;
}

double sample_sd(const std::vector<double>& xs, double mean) {
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

// Smoothed second moments of one partition block, per random-effect basis k.
struct BlockMoments {
  std::vector<Eigen::MatrixXd> s_init, s00, s11, s10;
};

struct EStepResult {
  std::vector<BlockMoments> blocks;
  std::vector<double> resid_moment;  // E[(y - x'beta - b'z)^2 | y] per measurement
  std::vector<std::size_t> rows;     // dataset row of each measurement
};

BlockMoments block_moments(const StateSpaceForm& ssf, const SmootherResult& sm) {
  const Eigen::Index n = ssf.n_local();
  BlockMoments out;
  const auto days = static_cast<std::size_t>(ssf.days);
  for (int k = 0; k < ssf.k_omega; ++k) {
    const Eigen::Index o = static_cast<Eigen::Index>(k) * n;
    auto second = [&](std::size_t t) {
      const auto mt = sm.means[t].segment(o, n);
      return Eigen::MatrixXd(sm.covs[t].block(o, o, n, n) + mt * mt.transpose());
    };
    Eigen::MatrixXd s00 = Eigen::MatrixXd::Zero(n, n), s11 = s00, s10 = s00;
    for (std::size_t t = 1; t < days; ++t) {
      const Eigen::MatrixXd cur = second(t);
      s11 += cur;
      s00 += second(t - 1);
      s10 += sm.lag_one[t - 1].block(o, o, n, n) + sm.means[t].segment(o, n) * sm.means[t - 1].segment(o, n).transpose();
    }
    out.s_init.push_back(second(0));
    out.s00.push_back(std::move(s00));
    out.s11.push_back(std::move(s11));
    out.s10.push_back(std::move(s10));
  }
  return out;
}

struct TraceStats {
  double a = 0.0, b11 = 0.0, b10 = 0.0, b00 = 0.0, logdet = 0.0;
  bool ok = true;

  [[nodiscard]] double c(double g) const { return a + b11 - 2.0 * g * b10 + g * g * (b00 - a); }
};

TraceStats trace_stats(const EStepResult& e, int k, const std::vector<Eigen::MatrixXd>& group_dist, double theta,
                       double jitter) {
  TraceStats ts;
  for (std::size_t b = 0; b < e.blocks.size(); ++b) {
    const Eigen::MatrixXd r = block_correlation(group_dist[b], theta, jitter);
    const Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) {
      ts.ok = false;
      return ts;
    }
    const auto& mom = e.blocks[b];
    const auto kk = static_cast<std::size_t>(k);
    ts.a += llt.solve(mom.s_init[kk]).trace();
    ts.b11 += llt.solve(mom.s11[kk]).trace();
    ts.b10 += llt.solve(mom.s10[kk]).trace();
    ts.b00 += llt.solve(mom.s00[kk]).trace();
    ts.logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  return ts;
}

// Expected complete-data log-likelihood of block k with v profiled out (up to a constant).
double profile_q(const TraceStats& ts, double g, double days, double n) {
  const double c = ts.c(g);
  if (!ts.ok || !(c > 0.0) || !(std::abs(g) < 1.0)) return kNegInf;
  return -0.5 * (days * n * std::log(c / (days * n)) + days * ts.logdet - n * std::log(1.0 - g * g) + days * n);
}

std::vector<double> real_roots(std::vector<double> coeffs /* c0 + c1 x + ... */) {
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  while (coeffs.size() > 1 && std::abs(coeffs.back()) <= 1e-14 * scale) coeffs.pop_back();
  const auto deg = static_cast<Eigen::Index>(coeffs.size()) - 1;
  std::vector<double> roots;
  if (deg < 1) return roots;
  if (deg == 1) {
    roots.push_back(-coeffs[0] / coeffs[1]);
    return roots;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (Eigen::Index i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < deg; ++i) companion(i, deg - 1) = -coeffs[static_cast<std::size_t>(i)] / coeffs.back();
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  for (Eigen::Index i = 0; i < deg; ++i) {
    const auto z = es.eigenvalues()(i);
    if (std::abs(z.imag()) <= 1e-10 * std::max(1.0, std::abs(z.real()))) roots.push_back(z.real());
  }
  return roots;
}

double golden_max(double lo, double hi, const auto& f, int iters = 80) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters && (b - a) > 1e-12; ++i) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    }
  }
  return f1 >= f2 ? x1 : x2;
}

struct FitContext {
  const FunctionalDataset& data;
  const BasisSet& bases;
  const FitOptions& opts;
  ObservationModel obs;
  Eigen::MatrixXd distances;
  Partition partition;
  std::vector<Eigen::MatrixXd> group_dist;
};

EStepResult e_step(const FitContext& ctx, const std::vector<StateSpaceForm>& blocks,
                   const std::vector<KalmanGains>& gains) {
  EStepResult out;
  out.blocks.resize(blocks.size());
  std::vector<std::vector<double>> moments(blocks.size());
  parallel_for(blocks.size(), ctx.opts.threads, [&](std::size_t b) {
    const auto& ssf = blocks[b];
    const SmootherResult sm = kalman_smoother(ssf, &gains[b]);
    out.blocks[b] = block_moments(ssf, sm);
    auto& mom = moments[b];
    mom.resize(ssf.measurements());
    for (int t = 0; t < ssf.days; ++t) {
      const auto& mean = sm.means[static_cast<std::size_t>(t)];
      const auto& cov = sm.covs[static_cast<std::size_t>(t)];
      for (auto i = ssf.time_begin[static_cast<std::size_t>(t)]; i < ssf.time_begin[static_cast<std::size_t>(t) + 1]; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int s = ssf.local_station[i];
        double fit = ssf.offset(row);
        double var = 0.0;
        for (int a = 0; a < ssf.k_omega; ++a) {
          fit += ssf.loading(row, a) * mean(ssf.state_index(a, s));
          for (int c = 0; c < ssf.k_omega; ++c) {
            var += ssf.loading(row, a) * ssf.loading(row, c) * cov(ssf.state_index(a, s), ssf.state_index(c, s));
          }
        }
        const double res = ssf.response(row) - fit;
        mom[i] = res * res + var;
      }
    }
  });
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    out.resid_moment.insert(out.resid_moment.end(), moments[b].begin(), moments[b].end());
    out.rows.insert(out.rows.end(), blocks[b].rows.begin(), blocks[b].rows.end());
  }
  return out;
}

double sigma_q(const FitContext& ctx, const EStepResult& e, const Eigen::VectorXd& coeffs) {
  double q = 0.0;
  for (std::size_t i = 0; i < e.rows.size(); ++i) {
    const double r = ctx.obs.sigma_basis.row(static_cast<Eigen::Index>(e.rows[i])).dot(coeffs);
    if (!(r >= ctx.opts.sigma2_floor)) return kNegInf;
    q -= 0.5 * (std::log(r) + e.resid_moment[i] / r);
  }
  return q;
}

void m_step_sigma(const FitContext& ctx, const EStepResult& e, ModelParams& params) {
  const Eigen::Index ks = params.sigma2.size();
  const bool nonneg = ctx.bases.sigma.kind() == BasisKind::bspline;
  double q_cur = sigma_q(ctx, e, params.sigma2);
  for (int inner = 0; inner < 5; ++inner) {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(ks, ks);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ks);
    for (std::size_t i = 0; i < e.rows.size(); ++i) {
      const auto b = ctx.obs.sigma_basis.row(static_cast<Eigen::Index>(e.rows[i])).transpose();
      const double r = b.dot(params.sigma2);
      const double w = 1.0 / (r * r);
      info.noalias() += w * b * b.transpose();
      rhs.noalias() += w * e.resid_moment[i] * b;
    }
    Eigen::VectorXd proposal = info.ldlt().solve(rhs);
    if (!proposal.allFinite()) return;
    if (nonneg) proposal = proposal.cwiseMax(ctx.opts.sigma2_floor);
    const Eigen::VectorXd dir = proposal - params.sigma2;
    bool moved = false;
    for (double step = 1.0; step > 1e-6; step *= 0.5) {
      const Eigen::VectorXd cand = params.sigma2 + step * dir;
      const double q = sigma_q(ctx, e, cand);
      if (q >= q_cur) {
        moved = q > q_cur;
        params.sigma2 = cand;
        q_cur = q;
        break;
      }
    }
    if (!moved) return;
  }
}

// Returns true when g had to be held at the stationarity bound.
bool m_step_random(const FitContext& ctx, const EStepResult& e, ModelParams& params) {
  const double days = ctx.data.days;
  const double n = static_cast<double>(ctx.data.network.size());
  const double gmax = 1.0 - ctx.opts.g_bound;
  bool projected = false;
  bool spatial = false;
  for (const auto& d : ctx.group_dist) spatial = spatial || d.rows() > 1;

  for (int k = 0; k < params.g.size(); ++k) {
    double g = std::clamp(params.g(k), -gmax, gmax);
    double theta = params.theta(k);

    if (spatial) {
      auto q_theta = [&](double log_theta) {
        return profile_q(trace_stats(e, k, ctx.group_dist, std::exp(log_theta), ctx.opts.jitter), g, days, n);
      };
      const double lo = std::log(ctx.opts.theta_min_km), hi = std::log(ctx.opts.theta_max_km);
      const double best = golden_max(lo, hi, q_theta);
      const double q_new = q_theta(best);
      const double q_old = profile_q(trace_stats(e, k, ctx.group_dist, theta, ctx.opts.jitter), g, days, n);
      if (q_new >= q_old || !std::isfinite(q_old)) theta = std::exp(best);
    }

    const TraceStats ts = trace_stats(e, k, ctx.group_dist, theta, ctx.opts.jitter);
    if (!ts.ok) continue;
    // d/dg of the profile: (1-T) d g^3 + (T-2) b10 g^2 + (T d + alpha) g - T b10 = 0,
    // alpha = a + b11, d = b00 - a.
    const double alpha = ts.a + ts.b11, delta = ts.b00 - ts.a;
    std::vector<double> candidates{-gmax, gmax, g};
    for (double root : real_roots({-days * ts.b10, days * delta + alpha, (days - 2.0) * ts.b10, (1.0 - days) * delta})) {
      if (root > -gmax && root < gmax) candidates.push_back(root);
    }
    double best_g = g, best_q = profile_q(ts, g, days, n);
    for (double c : candidates) {
      const double q = profile_q(ts, c, days, n);
      if (q > best_q) {
        best_q = q;
        best_g = c;
      }
    }
    if (std::abs(best_g) >= gmax) projected = true;
    const double c = ts.c(best_g);
    if (!(c > 0.0)) continue;
    params.g(k) = best_g;
    params.theta(k) = theta;
    params.v(k) = std::max(c / (days * n), 1e-12);
  }
  return projected;
}

ModelParams default_initial(const FitContext& ctx) {
  const auto& data = ctx.data;
  const int ko = ctx.bases.omega.count();
  const int ks = ctx.bases.sigma.count();
  ModelParams p;

  std::vector<Eigen::Index> obs_rows;
  for (std::size_t r = 0; r < data.rows(); ++r)
    if (data.observed(r)) obs_rows.push_back(static_cast<Eigen::Index>(r));
  const Eigen::MatrixXd x = ctx.obs.design(obs_rows, Eigen::all);
  const Eigen::VectorXd y = data.y(obs_rows);
  Eigen::MatrixXd xtx = x.transpose() * x;
  xtx.diagonal().array() += 1e-10 * std::max(1.0, xtx.diagonal().mean());
  p.beta = xtx.ldlt().solve(x.transpose() * y);
  const Eigen::VectorXd res = y - x * p.beta;
  const double s2 = std::max(res.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, res.size())), 1e-6);

  std::vector<double> dists;
  for (Eigen::Index i = 0; i < ctx.distances.rows(); ++i)
    for (Eigen::Index j = i + 1; j < ctx.distances.cols(); ++j)
      if (ctx.distances(i, j) > 0.0) dists.push_back(ctx.distances(i, j));
  double theta0 = 50.0;
  if (!dists.empty()) {
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2), dists.end());
    theta0 = dists[dists.size() / 2];
  }
  theta0 = std::clamp(theta0, ctx.opts.theta_min_km, ctx.opts.theta_max_km);

  const bool re = ctx.opts.estimate_random_effects;
  const double g0 = re ? 0.5 : 0.0;
  p.g = Eigen::VectorXd::Constant(ko, g0);
  p.v = Eigen::VectorXd::Constant(ko, re ? 0.5 * s2 * (1.0 - g0 * g0) : 0.0);
  p.theta = Eigen::VectorXd::Constant(ko, theta0);
  p.sigma2 = Eigen::VectorXd::Zero(ks);
  const double sig0 = ctx.opts.estimate_sigma2 ? (re ? 0.5 * s2 : s2) : 1.0;
  if (ctx.bases.sigma.kind() == BasisKind::bspline) {
    p.sigma2.setConstant(sig0);
  } else {
    p.sigma2(0) = sig0;
  }
  return p;
}

}  // namespace

StandardizedData standardize(const FunctionalDataset& data) {
  data.validate();
  StandardizationRecord rec;
  rec.covariate_names = data.covariate_names;
  const auto rows = data.rows();
  for (int j = 0; j < data.covariates(); ++j) {
    const auto col = data.X.col(j);
    const double mean = col.mean();
    double ss = (col.array() - mean).square().sum();
    const double sd = rows > 1 ? std::sqrt(ss / static_cast<double>(rows - 1)) : 0.0;
    if (!(sd > 0.0)) {
      fail(ErrorKind::data, "degenerate covariate '" + data.covariate_names[static_cast<std::size_t>(j)] + "' has zero variance");
    }
    rec.covariate_mean.push_back(mean);
    rec.covariate_sd.push_back(sd);
  }
  std::vector<double> ys;
  for (std::size_t r = 0; r < rows; ++r)
    if (data.observed(r)) ys.push_back(data.y(static_cast<Eigen::Index>(r)));
  rec.response_mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  rec.response_sd = sample_sd(ys, rec.response_mean);
  if (!(rec.response_sd > 0.0)) fail(ErrorKind::data, "response has zero variance");
  return StandardizedData{apply_standardization(data, rec), rec};
}

FunctionalDataset apply_standardization(const FunctionalDataset& data, const StandardizationRecord& rec) {
  if (static_cast<std::size_t>(data.covariates()) != rec.covariate_mean.size()) {
    fail(ErrorKind::shape, "standardization record does not match the covariates");
  }
  FunctionalDataset out = data;
  for (int j = 0; j < data.covariates(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    out.X.col(j) = (data.X.col(j).array() - rec.covariate_mean[jj]) / rec.covariate_sd[jj];
  }
  out.y = (data.y.array() - rec.response_mean) / rec.response_sd;
  return out;
}

BackTransformed back_transform(const StandardizationRecord& rec, const Eigen::VectorXd& beta, int k_mu, bool intercept) {
  const auto p = static_cast<Eigen::Index>(rec.covariate_mean.size());
  if (beta.size() != (p + (intercept ? 1 : 0)) * k_mu) fail(ErrorKind::shape, "beta does not match the standardization record");
  BackTransformed out;
  out.response_mean = rec.response_mean;
  out.beta.resize(p * k_mu);
  out.intercept = Eigen::VectorXd::Zero(k_mu);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const Eigen::VectorXd bj = beta.segment(j * k_mu, k_mu) * (rec.response_sd / rec.covariate_sd[jj]);
    out.beta.segment(j * k_mu, k_mu) = bj;
    out.intercept -= rec.covariate_mean[jj] * bj;
  }
  if (intercept) out.intercept += rec.response_sd * beta.segment(p * k_mu, k_mu);
  return out;
}

WhitenedSystem whiten_system(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                             const Partition& partition, const Eigen::MatrixXd& distances,
                             std::span<const char> row_mask, double steady_state_tol, double jitter, int threads) {
  const auto blocks = build_blocks(params, data, obs, partition, distances, row_mask, jitter);
  std::vector<Eigen::MatrixXd> white(blocks.size());
  std::vector<double> logdet(blocks.size());
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    const KalmanGains gains = kalman_gains(blocks[b], steady_state_tol);
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(blocks[b].measurements()), blocks[b].design.cols() + 1);
    cols << blocks[b].response, blocks[b].design;
    white[b] = whiten(blocks[b], gains, cols);
    logdet[b] = gains.log_det;
  });
  WhitenedSystem sys;
  Eigen::Index total = 0;
  for (const auto& w : white) total += w.rows();
  sys.design.resize(total, obs.design.cols());
  sys.response.resize(total);
  Eigen::Index at = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto nb = white[b].rows();
    sys.response.segment(at, nb) = white[b].col(0);
    sys.design.middleRows(at, nb) = white[b].rightCols(obs.design.cols());
    sys.log_det += logdet[b];
    at += nb;
  }
  sys.measurements = static_cast<std::size_t>(total);
  return sys;
}

double whitened_loglik(const WhitenedSystem& sys, const Eigen::VectorXd& beta) {
  const double quad = (sys.response - sys.design * beta).squaredNorm();
  return -0.5 * (static_cast<double>(sys.measurements) * kLog2Pi + sys.log_det + quad);
}

GlsSolution solve_gls(const WhitenedSystem& sys) {
  GlsSolution out;
  Eigen::MatrixXd a = sys.design.transpose() * sys.design;
  const Eigen::VectorXd rhs = sys.design.transpose() * sys.response;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  bool ok = llt.info() == Eigen::Success;
  if (ok && a.rows() > 0) {
    const auto d = llt.matrixLLT().diagonal();
    ok = d.minCoeff() > 1e-7 * d.maxCoeff();
  }
  if (!ok) {
    out.rank_deficient = true;
    out.ridge = 1e-8 * std::max(1.0, a.diagonal().mean());
    a.diagonal().array() += out.ridge;
    llt.compute(a);
    if (llt.info() != Eigen::Success) fail(ErrorKind::numeric, "whitened normal equations are not positive definite");
  }
  out.beta = llt.solve(rhs);
  out.hessian = -a;
  return out;
}

std::size_t functional_count(const FunctionalDataset& data, std::span<const char> row_mask) {
  std::vector<std::size_t> keys;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (data.observed(r) && (row_mask.empty() || row_mask[r])) keys.push_back(data.curve_of(r));
  }
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

MLEResult fit_mle(const FunctionalDataset& data, const BasisSet& bases, const FitOptions& opts) {
  data.validate();
  if (opts.em_max_iter < 1) fail(ErrorKind::parameter, "em_max_iter must be at least 1");
  if (!(opts.em_tol > 0.0)) fail(ErrorKind::parameter, "em_tol must be positive");
  FitContext ctx{data, bases, opts, make_observation_model(data, bases, opts.intercept), distance_matrix(data.network), {}, {}};
  ctx.partition = opts.partition_k > 1 ? partition_stations(data.network, opts.partition_k)
                                       : Partition::single(data.network.size());
  for (const auto& g : ctx.partition.groups) ctx.group_dist.push_back(submatrix(ctx.distances, g));

  ModelParams params = opts.initial ? *opts.initial : default_initial(ctx);
  // beta is re-solved by GLS before it is first used, so a caller may omit it.
  if (opts.initial && params.beta.size() == 0) params.beta = Eigen::VectorXd::Zero(ctx.obs.design.cols());
  params.validate(bases, ctx.obs.design.cols());

  MLEResult out;
  out.partition = ctx.partition;
  out.intercept = opts.intercept;
  out.steady_state_tol = opts.steady_state_tol;
  out.jitter = opts.jitter;
  out.N = functional_count(data);

  GlsSolution gls;
  for (int iter = 0;; ++iter) {
    const auto blocks = build_blocks(params, data, ctx.obs, ctx.partition, ctx.distances, {}, opts.jitter);
    std::vector<KalmanGains> gains(blocks.size());
    parallel_for(blocks.size(), opts.threads, [&](std::size_t b) { gains[b] = kalman_gains(blocks[b], opts.steady_state_tol); });

    // beta step: exact GLS under the current random-effect parameters.
    WhitenedSystem sys;
    {
      std::vector<Eigen::MatrixXd> white(blocks.size());
      parallel_for(blocks.size(), opts.threads, [&](std::size_t b) {
        Eigen::MatrixXd cols(static_cast<Eigen::Index>(blocks[b].measurements()), blocks[b].design.cols() + 1);
        cols << blocks[b].response, blocks[b].design;
        white[b] = whiten(blocks[b], gains[b], cols);
      });
      Eigen::Index total = 0;
      for (const auto& w : white) total += w.rows();
      sys.design.resize(total, ctx.obs.design.cols());
      sys.response.resize(total);
      Eigen::Index at = 0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        sys.response.segment(at, white[b].rows()) = white[b].col(0);
        sys.design.middleRows(at, white[b].rows()) = white[b].rightCols(ctx.obs.design.cols());
        sys.log_det += gains[b].log_det;
        at += white[b].rows();
      }
      sys.measurements = static_cast<std::size_t>(total);
    }
    gls = solve_gls(sys);
    params.beta = gls.beta;
    const double ll = whitened_loglik(sys, params.beta);
    if (!std::isfinite(ll)) fail(ErrorKind::numeric, "log-likelihood is not finite at EM iteration " + std::to_string(iter));
    out.loglik_trace.push_back(ll);
    out.iterations = iter;

    const auto nt = out.loglik_trace.size();
    if (nt > 1 && std::abs(out.loglik_trace[nt - 1] - out.loglik_trace[nt - 2]) < opts.em_tol) {
      out.converged = true;
      break;
    }
    if (!opts.estimate_random_effects && !opts.estimate_sigma2) {
      out.converged = true;
      break;
    }
    if (iter >= opts.em_max_iter) break;

    std::vector<StateSpaceForm> shifted = blocks;
    for (auto& b : shifted) b.offset = b.design * params.beta;
    const EStepResult e = e_step(ctx, shifted, gains);
    if (opts.estimate_sigma2) m_step_sigma(ctx, e, params);
    if (opts.estimate_random_effects) out.stationarity_projected |= m_step_random(ctx, e, params);
  }

  out.beta0 = params.beta;
  out.params = params;
  out.ridge = gls.ridge;
  out.rank_deficient = gls.rank_deficient;
  out.H0 = opts.hessian_mode == HessianMode::exact ? gls.hessian : compute_hessian(out, data, bases, opts);
  return out;
}

Eigen::MatrixXd compute_hessian(const MLEResult& mle, const FunctionalDataset& data, const BasisSet& bases,
                                const FitOptions& opts) {
  const ObservationModel obs = make_observation_model(data, bases, mle.intercept);
  const Eigen::MatrixXd dist = distance_matrix(data.network);
  if (opts.hessian_mode == HessianMode::exact) {
    const WhitenedSystem sys = whiten_system(mle.params, data, obs, mle.partition, dist, {}, mle.steady_state_tol, mle.jitter, opts.threads);
    return solve_gls(sys).hessian;
  }

  const double h = opts.hessian_fd_step;
  if (!(h > 0.0)) fail(ErrorKind::parameter, "hessian_fd_step must be positive");
  const auto blocks = build_blocks(mle.params, data, obs, mle.partition, dist, {}, mle.jitter);
  std::vector<KalmanGains> gains;
  for (const auto& b : blocks) gains.push_back(kalman_gains(b, mle.steady_state_tol));
  auto ll = [&](const Eigen::VectorXd& beta) {
    double total = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const Eigen::MatrixXd resid = blocks[b].response - blocks[b].design * beta;
      total += innovations_loglik(gains[b], filter_innovations(blocks[b], gains[b], resid).col(0));
    }
    return total;
  };
  const Eigen::VectorXd b0 = mle.params.beta;
  const Eigen::Index p = b0.size();
  Eigen::MatrixXd hess(p, p);
  const double f0 = ll(b0);
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::VectorXd bp = b0, bm = b0;
    bp(i) += h;
    bm(i) -= h;
    hess(i, i) = (ll(bp) - 2.0 * f0 + ll(bm)) / (h * h);
    for (Eigen::Index j = i + 1; j < p; ++j) {
      Eigen::VectorXd pp = b0, pm = b0, mp = b0, mm = b0;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      hess(i, j) = hess(j, i) = (ll(pp) - ll(pm) - ll(mp) + ll(mm)) / (4.0 * h * h);
    }
  }
  return hess;
}

}  // namespace fhdgm
