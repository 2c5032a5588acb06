#include "fhdgm/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fhdgm/error.hpp"
#include "fhdgm/parallel.hpp"

namespace fhdgm {

namespace {

// Unbiased draw from [0, bound) on the raw engine output, so the result does
// not depend on the standard library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double se_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

// Grid indices ordered from the largest lambda to the smallest.
std::vector<std::size_t> by_decreasing_lambda(const std::vector<double>& lambdas) {
  std::vector<std::size_t> idx(lambdas.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });
  return idx;
}

}  // namespace

int FoldAssignment::fold_of(std::size_t key) const {
  const auto it = std::lower_bound(keys.begin(), keys.end(), key);
  if (it == keys.end() || *it != key) return -1;
  return fold[static_cast<std::size_t>(it - keys.begin())];
}

std::vector<char> FoldAssignment::training_mask(const FunctionalDataset& data, int held_out) const {
  std::vector<char> mask(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) mask[r] = fold_of(data.curve_of(r)) != held_out;
  return mask;
}

std::vector<std::size_t> FoldAssignment::test_rows(const FunctionalDataset& data, int held_out) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < data.rows(); ++r)
    if (data.observed(r) && fold_of(data.curve_of(r)) == held_out) rows.push_back(r);
  return rows;
}

FoldAssignment make_folds(const FunctionalDataset& data, int K, std::uint64_t seed) {
  FoldAssignment fa;
  fa.K = K;
  fa.seed = seed;
  for (std::size_t r = 0; r < data.rows(); ++r)
    if (data.observed(r)) fa.keys.push_back(data.curve_of(r));
  std::sort(fa.keys.begin(), fa.keys.end());
  fa.keys.erase(std::unique(fa.keys.begin(), fa.keys.end()), fa.keys.end());
  if (K < 2) fail(ErrorKind::parameter, "cross-validation needs K >= 2");
  if (static_cast<std::size_t>(K) > fa.keys.size()) {
    fail(ErrorKind::parameter, "K = " + std::to_string(K) + " exceeds the " + std::to_string(fa.keys.size()) + " curves");
  }
  std::vector<std::size_t> order(fa.keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
  fa.fold.assign(fa.keys.size(), 0);
  for (std::size_t j = 0; j < order.size(); ++j) fa.fold[order[j]] = static_cast<int>(j % static_cast<std::size_t>(K));
  return fa;
}

LinearPredictor linear_predictor(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                                 const Partition& partition, const Eigen::MatrixXd& distances,
                                 std::span<const char> row_mask, std::span<const std::size_t> targets, double jitter,
                                 int threads) {
  std::vector<char> mask(data.rows(), 1);
  if (!row_mask.empty()) {
    if (row_mask.size() != data.rows()) fail(ErrorKind::shape, "row mask must have one entry per row");
    std::copy(row_mask.begin(), row_mask.end(), mask.begin());
  }
  for (auto r : targets) {
    if (r >= data.rows()) fail(ErrorKind::lookup, "prediction target " + std::to_string(r) + " is not a dataset row");
    mask[r] = 0;
  }
  const auto blocks = build_blocks(params, data, obs, partition, distances, mask, jitter);
  std::vector<std::vector<Eigen::MatrixXd>> smoothed(blocks.size());
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    const KalmanGains gains = kalman_gains(blocks[b]);
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(blocks[b].measurements()), blocks[b].design.cols() + 1);
    cols << blocks[b].response, blocks[b].design;
    smoothed[b] = smooth_means(blocks[b], gains, cols);
  });

  std::vector<int> block_of(data.network.size(), -1), local_of(data.network.size(), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t s = 0; s < blocks[b].stations.size(); ++s) {
      block_of[blocks[b].stations[s]] = static_cast<int>(b);
      local_of[blocks[b].stations[s]] = static_cast<int>(s);
    }

  const auto p = obs.design.cols();
  LinearPredictor lp;
  lp.rows.assign(targets.begin(), targets.end());
  lp.offset.resize(static_cast<Eigen::Index>(targets.size()));
  lp.slope.resize(static_cast<Eigen::Index>(targets.size()), p);
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto r = targets[j];
    const auto row = static_cast<Eigen::Index>(r);
    const auto st = static_cast<std::size_t>(data.station[r]);
    const auto b = static_cast<std::size_t>(block_of[st]);
    const auto& mean = smoothed[b][static_cast<std::size_t>(data.day[r])];
    Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(p + 1);
    for (int k = 0; k < blocks[b].k_omega; ++k) z += obs.omega_basis(row, k) * mean.row(blocks[b].state_index(k, local_of[st]));
    lp.offset(static_cast<Eigen::Index>(j)) = z(0);
    lp.slope.row(static_cast<Eigen::Index>(j)) = obs.design.row(row) - z.tail(p);
  }
  return lp;
}

CVResult cv_run(const FunctionalDataset& data, const BasisSet& bases, const MLEResult& mle, const PenaltySpec& spec,
                const FoldAssignment& folds, const CVOptions& opts) {
  data.validate();
  const ObservationModel obs = make_observation_model(data, bases, mle.intercept);
  const Eigen::MatrixXd distances = distance_matrix(data.network);
  if (spec.weights.size() != obs.design.cols()) fail(ErrorKind::shape, "penalty weights do not match the design");
  const auto nl = spec.lambda_grid.size();
  const auto K = static_cast<std::size_t>(folds.K);

  CVResult cv;
  cv.lambdas = spec.lambda_grid;
  cv.fold_rmse.assign(K, std::vector<double>(nl, 0.0));
  cv.fold_mae.assign(K, std::vector<double>(nl, 0.0));
  cv.folds.resize(K);

  // Folds run in parallel; the blocks inside a fold are processed serially.
  parallel_for(K, opts.threads, [&](std::size_t f) {
    auto& diag = cv.folds[f];
    const auto fold = static_cast<int>(f);
    const std::vector<char> mask = folds.training_mask(data, fold);
    const std::vector<std::size_t> test = folds.test_rows(data, fold);
    diag.test_rows = test.size();
    diag.train_curves = functional_count(data, mask);
    if (test.empty() || diag.train_curves == 0) {
      diag.flagged = true;
      diag.message = "fold has no training or no test curves";
      return;
    }
    const WhitenedSystem sys =
        whiten_system(mle.params, data, obs, mle.partition, distances, mask, mle.steady_state_tol, mle.jitter, 1);
    const GlsSolution gls = solve_gls(sys);
    if (gls.rank_deficient) {
      diag.flagged = true;
      diag.message = "training curves leave a design column unidentified";
      return;
    }
    const QuadraticSurrogate q{gls.beta, gls.hessian, diag.train_curves};
    PenaltySpec fold_spec = spec;
    const PathResult path = solution_path(q, fold_spec, opts.solver);
    diag.lambda_zero = path.lambda_zero;

    const LinearPredictor lp = linear_predictor(mle.params, data, obs, mle.partition, distances, mask, test, mle.jitter, 1);
    Eigen::VectorXd truth(static_cast<Eigen::Index>(test.size()));
    for (std::size_t j = 0; j < test.size(); ++j) truth(static_cast<Eigen::Index>(j)) = data.y(static_cast<Eigen::Index>(test[j]));
    for (std::size_t l = 0; l < nl; ++l) {
      const Eigen::VectorXd err = (lp(path.betas[l]) - truth) * opts.error_scale;
      cv.fold_rmse[f][l] = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
      cv.fold_mae[f][l] = err.cwiseAbs().mean();
    }
  });

  std::vector<std::size_t> used;
  for (std::size_t f = 0; f < K; ++f) {
    if (cv.folds[f].flagged) {
      cv.warnings.push_back("fold " + std::to_string(f) + " skipped: " + cv.folds[f].message);
    } else {
      used.push_back(f);
    }
  }
  if (used.empty()) fail(ErrorKind::data, "every cross-validation fold was flagged");
  for (std::size_t l = 0; l < nl; ++l) {
    std::vector<double> r, a;
    for (auto f : used) {
      r.push_back(cv.fold_rmse[f][l]);
      a.push_back(cv.fold_mae[f][l]);
    }
    const double mr = mean_of(r), ma = mean_of(a);
    cv.rmse.push_back(mr);
    cv.mae.push_back(ma);
    cv.rmse_se.push_back(se_of(r, mr));
    cv.mae_se.push_back(se_of(a, ma));
  }
  return cv;
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::min_rmse: return "min_rmse";
    case Criterion::min_mae: return "min_mae";
    case Criterion::rmse_1se: return "rmse_1se";
    case Criterion::mae_1se: return "mae_1se";
  }
  return "unknown";
}

Criterion criterion_from_string(const std::string& name) {
  for (auto c : kAllCriteria)
    if (to_string(c) == name) return c;
  fail(ErrorKind::config, "unknown selection criterion '" + name + "'");
}

Selection select_lambda(const CVResult& cv, Criterion criterion) {
  const bool use_rmse = criterion == Criterion::min_rmse || criterion == Criterion::rmse_1se;
  const auto& err = use_rmse ? cv.rmse : cv.mae;
  const auto& se = use_rmse ? cv.rmse_se : cv.mae_se;
  if (err.empty() || err.size() != cv.lambdas.size()) fail(ErrorKind::shape, "cross-validation curves are incomplete");
  const auto order = by_decreasing_lambda(cv.lambdas);
  std::size_t best = order.front();
  for (auto i : order)
    if (err[i] < err[best]) best = i;
  std::size_t chosen = best;
  if (criterion == Criterion::rmse_1se || criterion == Criterion::mae_1se) {
    const double bound = err[best] + se[best];
    for (auto i : order) {
      if (err[i] <= bound) {
        chosen = i;
        break;
      }
    }
  }
  return Selection{criterion, chosen, cv.lambdas[chosen], err[chosen]};
}

SolveResult refit_final(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                        const SolverOptions& opts) {
  return pmle_solve(q, weights, lambda, std::nullopt, opts);
}

PipelineResult run_pipeline(const FunctionalDataset& raw, const BasisSet& bases, const PipelineOptions& opts) {
  PipelineResult out;
  StandardizedData sd = standardize(raw);
  out.record = sd.record;
  FitOptions fit = opts.fit;
  fit.threads = opts.threads;
  out.mle = fit_mle(sd.data, bases, fit);

  const QuadraticSurrogate q = surrogate_from(out.mle);
  std::vector<Eigen::Index> unpenalized;
  if (out.mle.intercept) {
    const auto k = static_cast<Eigen::Index>(bases.mu.count());
    for (Eigen::Index i = q.beta0.size() - k; i < q.beta0.size(); ++i) unpenalized.push_back(i);
  }
  out.spec.lambda_grid = lambda_grid(opts.lambda_min, opts.lambda_max, opts.lambda_count);
  out.spec.gamma = opts.gamma;
  out.spec.weights = adaptive_weights(q.beta0, opts.gamma, kWeightFloor, unpenalized);
  out.path = solution_path(q, out.spec, opts.solver);

  const FoldAssignment folds = make_folds(sd.data, opts.folds, opts.seed);
  CVOptions cvo;
  cvo.error_scale = sd.record.response_sd;
  cvo.solver = opts.solver;
  cvo.threads = opts.threads;
  out.cv = cv_run(sd.data, bases, out.mle, out.spec, folds, cvo);
  for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
    out.selections[c] = select_lambda(out.cv, kAllCriteria[c]);
    out.refits[c] = refit_final(q, out.spec.weights, out.selections[c].lambda, opts.solver).beta;
  }
  return out;
}

}  // namespace fhdgm
