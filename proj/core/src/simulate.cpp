#include "fhdgm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fhdgm/error.hpp"
#include "fhdgm/estimate.hpp"
#include "fhdgm/parallel.hpp"

namespace fhdgm {

namespace {

// Random-effect and error-variance bases: three quadratic B-splines on the day.
BasisSpec three_quadratic(Interval domain) { return BasisSpec{BasisKind::bspline, 3, 2, domain}; }

SimSetting base_setting() {
  SimSetting s;
  s.network = reference_network();
  s.days = 365;
  s.hours.resize(24);
  std::iota(s.hours.begin(), s.hours.end(), 0.0);
  s.domain = Interval{0.0, 24.0};
  s.sigma_x = Eigen::MatrixXd::Identity(3, 3);
  s.mu = BasisSpec{BasisKind::bspline, 7, 3, s.domain};
  s.omega = three_quadratic(s.domain);
  s.sigma = three_quadratic(s.domain);
  s.beta.resize(7);
  s.beta << 1, 1, 1, 1, 0, 0, 0;
  s.v = 1.0;
  s.sigma2 = 1.0;
  return s;
}

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) fail(ErrorKind::parameter, std::string(what) + " is not positive definite");
  return llt.matrixL();
}

double sample_mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

void SimSetting::validate() const {
  network.validate();
  if (days < 1) fail(ErrorKind::parameter, "setting needs at least one day");
  if (hours.empty()) fail(ErrorKind::parameter, "setting needs a non-empty within-day grid");
  for (double h : hours)
    if (!domain.contains(h)) fail(ErrorKind::domain, "grid point outside the functional domain");
  if (sigma_x.rows() < 1 || sigma_x.rows() != sigma_x.cols()) fail(ErrorKind::shape, "covariate covariance must be square");
  if ((sigma_x - sigma_x.transpose()).cwiseAbs().maxCoeff() > 1e-12) fail(ErrorKind::parameter, "covariate covariance must be symmetric");
  lower_cholesky(sigma_x, "covariate covariance");
  if (beta.size() != mu.count) fail(ErrorKind::shape, "true beta must have one entry per mean basis function");
  if (!(std::abs(g) < 1.0)) fail(ErrorKind::stationarity, "transition coefficient must satisfy |g| < 1");
  if (!(v >= 0.0) || !(sigma2 > 0.0) || !(theta >= 0.0)) fail(ErrorKind::parameter, "variances and range must be non-negative");
}

BasisSet SimSetting::bases() const {
  return BasisSet{BasisSystem::from_spec(mu), BasisSystem::from_spec(omega), BasisSystem::from_spec(sigma)};
}

ModelParams SimSetting::truth() const {
  ModelParams p;
  const int k = mu.count;
  p.beta.resize(static_cast<Eigen::Index>(covariates()) * k);
  for (int j = 0; j < covariates(); ++j) p.beta.segment(static_cast<Eigen::Index>(j) * k, k) = beta;
  p.g = Eigen::VectorXd::Constant(omega.count, g);
  p.v = Eigen::VectorXd::Constant(omega.count, v);
  p.theta = Eigen::VectorXd::Constant(omega.count, theta);
  // B-spline bases sum to one, so equal coefficients give a constant variance.
  p.sigma2 = Eigen::VectorXd::Zero(sigma.count);
  if (sigma.kind == BasisKind::bspline) {
    p.sigma2.setConstant(sigma2);
  } else {
    p.sigma2(0) = sigma2;
  }
  return p;
}

StationNetwork reference_network() {
  // Listed so that any prefix is spread over the whole area.
  static const std::array<std::array<double, 2>, 15> coords{{
      {45.46, 9.19}, {45.70, 9.67}, {45.14, 10.03}, {45.81, 8.83}, {46.17, 9.87},
      {45.54, 10.22}, {45.19, 9.16}, {45.99, 9.26}, {45.16, 10.79}, {45.31, 9.50},
      {45.85, 10.56}, {45.61, 8.85}, {46.13, 9.40}, {45.40, 10.50}, {45.03, 9.67},
  }};
  StationNetwork net;
  net.metric = Metric::geodesic;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    net.ids.push_back((i + 1 < 10 ? "S0" : "S") + std::to_string(i + 1));
    net.coords.push_back(coords[i]);
  }
  return net;
}

std::vector<SimSetting> builtin_settings() {
  SimSetting one = base_setting();
  one.name = "I";
  one.description = "Uncorrelated response and regressors";
  one.theta = 0.0;
  one.g = 0.0;

  SimSetting two = base_setting();
  two.name = "II";
  two.description = "Spatiotemporal correlation and uncorrelated regressors";
  two.theta = 50.0;
  two.g = 0.85;

  SimSetting three = two;
  three.name = "III";
  three.description = "Spatiotemporal correlation and correlated regressors";
  three.sigma_x << 1.0, 0.9, 0.7,
                   0.9, 1.0, 0.5,
                   0.7, 0.5, 1.0;
  return {one, two, three};
}

SimSetting builtin_setting(const std::string& name) {
  for (auto& s : builtin_settings())
    if (s.name == name) return s;
  fail(ErrorKind::config, "unknown simulation setting '" + name + "' (expected I, II or III)");
}

SimSetting rescale(SimSetting setting, int n, int days) {
  if (n < 1 || static_cast<std::size_t>(n) > setting.network.size()) {
    fail(ErrorKind::parameter, "station count must lie in [1, " + std::to_string(setting.network.size()) + "]");
  }
  if (days < 1) fail(ErrorKind::parameter, "day count must be positive");
  std::vector<std::size_t> keep(static_cast<std::size_t>(n));
  std::iota(keep.begin(), keep.end(), 0);
  setting.network = setting.network.subset(keep);
  setting.days = days;
  return setting;
}

SimSetting desk_scale(SimSetting setting) { return rescale(std::move(setting), 5, 60); }

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

SimulatedData simulate_dataset(const SimSetting& setting, std::uint64_t seed) {
  setting.validate();
  SimulatedData sim{FunctionalDataset{}, setting.bases(), setting.truth(), {}};
  const auto n = static_cast<Eigen::Index>(setting.network.size());
  const int ko = sim.bases.omega.count();
  const int p = setting.covariates();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  // Latent states: stationary start, then the AR(1) recursion.
  const Eigen::MatrixXd corr = block_correlation(distance_matrix(setting.network), setting.theta);
  const Eigen::MatrixXd innov_chol = lower_cholesky(setting.v * corr + 1e-12 * Eigen::MatrixXd::Identity(n, n), "innovation covariance");
  const double stationary_scale = 1.0 / std::sqrt(1.0 - setting.g * setting.g);
  sim.latent.resize(static_cast<std::size_t>(setting.days));
  for (int t = 0; t < setting.days; ++t) {
    Eigen::MatrixXd z(n, ko);
    for (int k = 0; k < ko; ++k) {
      Eigen::VectorXd u(n);
      for (Eigen::Index i = 0; i < n; ++i) u(i) = normal(rng);
      const Eigen::VectorXd eta = innov_chol * u;
      z.col(k) = t == 0 ? Eigen::VectorXd(stationary_scale * eta)
                        : Eigen::VectorXd(setting.g * sim.latent[static_cast<std::size_t>(t) - 1].col(k) + eta);
    }
    sim.latent[static_cast<std::size_t>(t)] = std::move(z);
  }

  auto& d = sim.data;
  d.network = setting.network;
  d.days = setting.days;
  d.first_date = "2020-01-01";
  for (int j = 0; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j + 1));
  const auto rows = static_cast<Eigen::Index>(setting.days) * n * static_cast<Eigen::Index>(setting.hours.size());
  d.X.resize(rows, p);
  d.y.resize(rows);
  const Eigen::MatrixXd x_chol = lower_cholesky(setting.sigma_x, "covariate covariance");
  Eigen::Index r = 0;
  for (int t = 0; t < setting.days; ++t)
    for (Eigen::Index s = 0; s < n; ++s)
      for (double h : setting.hours) {
        d.station.push_back(static_cast<int>(s));
        d.day.push_back(t);
        d.hour.push_back(h);
        Eigen::VectorXd u(p);
        for (int j = 0; j < p; ++j) u(j) = normal(rng);
        d.X.row(r) = (x_chol * u).transpose();
        ++r;
      }

  const Eigen::MatrixXd design = fixed_effects_design(d, sim.bases.mu);
  const Eigen::MatrixXd b_omega = sim.bases.omega.eval_matrix(d.hour);
  const Eigen::MatrixXd b_sigma = sim.bases.sigma.eval_matrix(d.hour);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const auto& z = sim.latent[static_cast<std::size_t>(d.day[iu])];
    const double omega = b_omega.row(i).dot(z.row(d.station[iu]));
    const double var = b_sigma.row(i).dot(sim.truth.sigma2);
    d.y(i) = design.row(i).dot(sim.truth.beta) + omega + std::sqrt(var) * normal(rng);
  }
  d.validate();
  return sim;
}

ReplicationResult run_replication(const SimSetting& setting, const MonteCarloOptions& opts, int rep) {
  ReplicationResult res;
  res.index = rep;
  const std::uint64_t seed = replication_seed(opts.seed, static_cast<std::uint64_t>(rep));
  try {
    const SimulatedData sim = simulate_dataset(setting, seed);

    // Hold a random share of curves out of the whole pipeline.
    FunctionalDataset train = sim.data;
    std::vector<std::size_t> test;
    if (opts.test_fraction > 0.0) {
      const int k = std::max(2, static_cast<int>(std::lround(1.0 / opts.test_fraction)));
      const FoldAssignment split = make_folds(sim.data, k, replication_seed(seed, 0x7e57));
      test = split.test_rows(sim.data, 0);
      for (auto row : test) train.y(static_cast<Eigen::Index>(row)) = kMissing;
    }

    PipelineOptions po = opts.pipeline;
    po.seed = seed;
    po.threads = 1;
    const PipelineResult pr = run_pipeline(train, sim.bases, po);
    const int kmu = sim.bases.mu.count();
    res.beta_mle = back_transform(pr.record, pr.mle.beta0, kmu, pr.mle.intercept).beta;
    for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
      res.beta_selected[c] = back_transform(pr.record, pr.refits[c], kmu, pr.mle.intercept).beta;
      res.lambda_selected[c] = pr.selections[c].lambda;
    }
    res.cv_rmse = pr.cv.rmse;
    res.cv_mae = pr.cv.mae;
    res.loglik_trace = pr.mle.loglik_trace;
    for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
      res.em_max_drop = std::max(res.em_max_drop, res.loglik_trace[i - 1] - res.loglik_trace[i]);
    res.em_iterations = pr.mle.iterations;
    res.params = pr.mle.params;

    if (!test.empty()) {
      const FunctionalDataset std_train = apply_standardization(train, pr.record);
      const ObservationModel obs = make_observation_model(std_train, sim.bases, pr.mle.intercept);
      const LinearPredictor lp = linear_predictor(pr.mle.params, std_train, obs, pr.mle.partition,
                                                  distance_matrix(std_train.network), {}, test, pr.mle.jitter);
      Eigen::VectorXd truth(static_cast<Eigen::Index>(test.size()));
      for (std::size_t j = 0; j < test.size(); ++j) truth(static_cast<Eigen::Index>(j)) = sim.data.y(static_cast<Eigen::Index>(test[j]));
      auto rmse = [&](const Eigen::VectorXd& beta_std) {
        const Eigen::VectorXd pred = (lp(beta_std).array() * pr.record.response_sd + pr.record.response_mean).matrix();
        return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(truth.size()));
      };
      res.test_rmse_mle = rmse(pr.mle.beta0);
      for (std::size_t c = 0; c < kAllCriteria.size(); ++c) res.test_rmse[c] = rmse(pr.refits[c]);
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

MonteCarloReport monte_carlo(const SimSetting& setting, const MonteCarloOptions& opts) {
  if (opts.replications < 1) fail(ErrorKind::parameter, "replications must be at least 1");
  setting.validate();
  MonteCarloReport report;
  report.setting = setting.name;
  report.replications = opts.replications;
  report.runs.resize(static_cast<std::size_t>(opts.replications));
  parallel_for(report.runs.size(), opts.threads,
               [&](std::size_t r) { report.runs[r] = run_replication(setting, opts, static_cast<int>(r)); });

  std::vector<const ReplicationResult*> ok;
  for (const auto& r : report.runs) {
    if (r.ok) {
      ok.push_back(&r);
    } else {
      ++report.failures;
    }
  }
  if (static_cast<double>(report.failures) > opts.max_failure_rate * opts.replications || ok.empty()) {
    std::string first;
    for (const auto& r : report.runs)
      if (!r.ok) {
        first = r.error;
        break;
      }
    fail(ErrorKind::numeric, std::to_string(report.failures) + " of " + std::to_string(opts.replications) +
                                 " replications failed; first error: " + first);
  }

  const ModelParams truth = setting.truth();
  const auto ncoef = truth.beta.size();
  for (Eigen::Index i = 0; i < ncoef; ++i) {
    CoefficientSummary cs;
    cs.truth = truth.beta(i);
    std::vector<double> mle;
    for (auto* r : ok) mle.push_back(r->beta_mle(i));
    cs.mean_mle = sample_mean(mle);
    cs.sd_mle = sample_sd(mle);
    for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
      std::vector<double> est;
      int zeros = 0;
      for (auto* r : ok) {
        est.push_back(r->beta_selected[c](i));
        zeros += r->beta_selected[c](i) == 0.0;
      }
      cs.mean[c] = sample_mean(est);
      cs.sd[c] = sample_sd(est);
      cs.zero_frequency[c] = static_cast<double>(zeros) / static_cast<double>(ok.size());
    }
    report.coefficients.push_back(cs);
  }

  report.lambdas = opts.pipeline.lambda_count > 0
                       ? lambda_grid(opts.pipeline.lambda_min, opts.pipeline.lambda_max, opts.pipeline.lambda_count)
                       : std::vector<double>{};
  const std::size_t nl = ok.front()->cv_rmse.size();
  for (std::size_t l = 0; l < nl; ++l) {
    std::vector<double> r, a;
    for (auto* run : ok) {
      r.push_back(run->cv_rmse[l]);
      a.push_back(run->cv_mae[l]);
    }
    const double root = std::sqrt(static_cast<double>(ok.size()));
    report.rmse_mean.push_back(sample_mean(r));
    report.rmse_se.push_back(sample_sd(r) / root);
    report.mae_mean.push_back(sample_mean(a));
    report.mae_se.push_back(sample_sd(a) / root);
  }
  for (std::size_t c = 0; c < kAllCriteria.size(); ++c)
    for (auto* run : ok) report.lambda_star[c].push_back(run->lambda_selected[c]);

  std::vector<double> diff, mle_rmse, min_rmse;
  for (auto* run : ok) {
    mle_rmse.push_back(run->test_rmse_mle);
    min_rmse.push_back(run->test_rmse[0]);
    diff.push_back(run->test_rmse[0] - run->test_rmse_mle);
  }
  report.test_rmse_mle_mean = sample_mean(mle_rmse);
  report.test_rmse_min_mean = sample_mean(min_rmse);
  const double sd = sample_sd(diff);
  const double md = sample_mean(diff);
  report.paired_t = sd > 0.0 ? md / (sd / std::sqrt(static_cast<double>(diff.size()))) : 0.0;
  return report;
}

}  // namespace fhdgm
