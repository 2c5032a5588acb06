#include "fhdgm/penalize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fhdgm/error.hpp"
#include "fhdgm/estimate.hpp"

namespace fhdgm {

namespace {

double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

std::vector<Eigen::Index> indices_where(const Eigen::VectorXd& v, auto pred) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (pred(i)) out.push_back(i);
  return out;
}

// Minimizer with the penalized coefficients pinned at zero.
Eigen::VectorXd saturated_solution(const Eigen::MatrixXd& a, const Eigen::VectorXd& beta0, const Eigen::VectorXd& w) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(beta0.size());
  const auto free = indices_where(w, [&](Eigen::Index i) { return w(i) == 0.0; });
  if (!free.empty()) {
    const Eigen::VectorXd rhs = (a * beta0)(free);
    const Eigen::VectorXd sol = a(free, free).ldlt().solve(rhs);
    beta(free) = sol;
  }
  return beta;
}

// Exact minimizer on the support `s` with signs fixed to those of `beta`.
Eigen::VectorXd polish(const Eigen::MatrixXd& a, const Eigen::VectorXd& ab0, const Eigen::VectorXd& w, double nl,
                       const Eigen::VectorXd& beta) {
  const auto s = indices_where(beta, [&](Eigen::Index i) { return beta(i) != 0.0; });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(beta.size());
  if (s.empty()) return out;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(s.size()));
  for (std::size_t j = 0; j < s.size(); ++j) {
    rhs(static_cast<Eigen::Index>(j)) = ab0(s[j]) - nl * w(s[j]) * sign(beta(s[j]));
  }
  const Eigen::MatrixXd ass = a(s, s);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(ass);
  Eigen::VectorXd sol = ldlt.solve(rhs);
  sol += ldlt.solve(rhs - ass * sol);  // one step of iterative refinement
  out(s) = sol;
  return out;
}

}  // namespace

void QuadraticSurrogate::validate() const {
  const auto p = beta0.size();
  if (H0.rows() != p || H0.cols() != p) fail(ErrorKind::shape, "H0 must be P x P with P = size of beta0");
  if (N == 0) fail(ErrorKind::parameter, "surrogate needs N > 0");
  if (!beta0.allFinite() || !H0.allFinite()) fail(ErrorKind::numeric, "surrogate contains non-finite values");
  const double scale = std::max(1.0, H0.cwiseAbs().maxCoeff());
  if ((H0 - H0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) fail(ErrorKind::parameter, "H0 must be symmetric");
  for (Eigen::Index i = 0; i < p; ++i)
    if (!(H0(i, i) < 0.0)) fail(ErrorKind::parameter, "H0 must be negative definite");
}

QuadraticSurrogate surrogate_from(const MLEResult& mle) { return QuadraticSurrogate{mle.beta0, mle.H0, mle.N}; }

std::vector<double> lambda_grid(double lambda_min, double lambda_max, int count) {
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min) || !std::isfinite(lambda_max)) {
    fail(ErrorKind::parameter, "lambda grid needs 0 < lambda_min < lambda_max");
  }
  if (count < 2) fail(ErrorKind::parameter, "lambda grid needs at least two positive values");
  std::vector<double> grid(static_cast<std::size_t>(count) + 1);
  const double lo = std::log(lambda_min), hi = std::log(lambda_max);
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = std::exp(hi + (lo - hi) * i / (count - 1));
  grid.front() = lambda_max;
  grid[static_cast<std::size_t>(count) - 1] = lambda_min;
  grid.back() = 0.0;
  return grid;
}

Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& beta0, double gamma, double w_floor,
                                 const std::vector<Eigen::Index>& unpenalized) {
  if (!(gamma >= 0.0)) fail(ErrorKind::parameter, "gamma must be non-negative");
  if (!(w_floor > 0.0)) fail(ErrorKind::parameter, "weight floor must be positive");
  Eigen::VectorXd w(beta0.size());
  for (Eigen::Index i = 0; i < beta0.size(); ++i) w(i) = std::pow(std::max(std::abs(beta0(i)), w_floor), -gamma);
  for (auto i : unpenalized) {
    if (i < 0 || i >= w.size()) fail(ErrorKind::lookup, "unpenalized index out of range");
    w(i) = 0.0;
  }
  return w;
}

double objective(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd d = beta - q.beta0;
  return -0.5 * d.dot(q.H0 * d) + static_cast<double>(q.N) * lambda * weights.cwiseProduct(beta.cwiseAbs()).sum();
}

double kkt_residual(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                    const Eigen::VectorXd& beta) {
  const Eigen::VectorXd g = -q.H0 * (beta - q.beta0);
  const double nl = static_cast<double>(q.N) * lambda;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    const double r = beta(i) != 0.0 ? std::abs(g(i) + nl * weights(i) * sign(beta(i)))
                                     : std::max(std::abs(g(i)) - nl * weights(i), 0.0);
    worst = std::max(worst, r);
  }
  return worst;
}

double lambda_zero(const QuadraticSurrogate& q, const Eigen::VectorXd& weights) {
  q.validate();
  if (weights.size() != q.beta0.size()) fail(ErrorKind::shape, "weights must have one entry per coefficient");
  const Eigen::MatrixXd a = -q.H0;
  const Eigen::VectorXd g = a * (q.beta0 - saturated_solution(a, q.beta0, weights));
  double lz = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (weights(i) > 0.0) lz = std::max(lz, std::abs(g(i)) / (static_cast<double>(q.N) * weights(i)));
  return lz;
}

SolveResult pmle_solve(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                       const std::optional<Eigen::VectorXd>& warm_start, const SolverOptions& opts) {
  q.validate();
  const auto p = q.beta0.size();
  if (weights.size() != p) fail(ErrorKind::shape, "weights must have one entry per coefficient");
  if (!(weights.array() >= 0.0).all() || !weights.allFinite()) fail(ErrorKind::parameter, "weights must be finite and non-negative");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorKind::parameter, "lambda must be finite and non-negative");

  SolveResult out;
  if (lambda == 0.0) {
    out.beta = q.beta0;
    return out;
  }
  const Eigen::MatrixXd a = -q.H0;
  const double nl = static_cast<double>(q.N) * lambda;
  if (lambda >= lambda_zero(q, weights)) {
    out.beta = saturated_solution(a, q.beta0, weights);
    out.kkt_residual = kkt_residual(q, weights, lambda, out.beta);
    return out;
  }

  const Eigen::VectorXd ab0 = a * q.beta0;
  Eigen::VectorXd beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  if (beta.size() != p) fail(ErrorKind::shape, "warm start has the wrong length");
  Eigen::VectorXd grad = ab0 - a * beta;  // -(gradient of the quadratic part)

  int sweeps = 0;
  double best_res = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = beta;
  for (int round = 0; round < 50 && sweeps < opts.max_sweeps; ++round) {
    for (; sweeps < opts.max_sweeps; ++sweeps) {
      double change = 0.0, size = 0.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        const double aii = a(i, i);
        const double updated = soft(grad(i) + aii * beta(i), nl * weights(i)) / aii;
        const double delta = updated - beta(i);
        if (delta != 0.0) {
          grad.noalias() -= delta * a.col(i);
          beta(i) = updated;
        }
        change = std::max(change, std::abs(delta));
        size = std::max(size, std::abs(updated));
      }
      if (change <= opts.tol * std::max(1.0, size)) {
        ++sweeps;
        break;
      }
    }
    const Eigen::VectorXd candidate = polish(a, ab0, weights, nl, beta);
    bool signs_ok = true;
    for (Eigen::Index i = 0; i < p; ++i)
      if (beta(i) != 0.0 && weights(i) > 0.0 && sign(candidate(i)) != sign(beta(i))) signs_ok = false;
    const double res = signs_ok ? kkt_residual(q, weights, lambda, candidate) : kkt_residual(q, weights, lambda, beta);
    const Eigen::VectorXd& chosen = signs_ok ? candidate : beta;
    if (res < best_res) {
      best_res = res;
      best = chosen;
    }
    if (best_res < opts.kkt_tol) break;
    // Restart coordinate descent from the polished point with a tighter stopping rule.
    beta = best;
    grad = ab0 - a * beta;
  }
  out.beta = best;
  out.sweeps = sweeps;
  out.kkt_residual = best_res;
  if (!(best_res < opts.kkt_tol)) {
    std::ostringstream msg;
    msg << "penalized solver did not reach the KKT tolerance at lambda = " << lambda << " (residual " << best_res
        << " after " << sweeps << " sweeps)";
    fail(ErrorKind::solver, msg.str());
  }
  return out;
}

PathResult solution_path(const QuadraticSurrogate& q, const PenaltySpec& spec, const SolverOptions& opts) {
  q.validate();
  const auto& grid = spec.lambda_grid;
  if (grid.empty()) fail(ErrorKind::parameter, "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) fail(ErrorKind::parameter, "lambda grid values must be finite and non-negative");
    if (i > 0 && !(grid[i] < grid[i - 1])) fail(ErrorKind::parameter, "lambda grid must be strictly decreasing");
  }
  PathResult path;
  path.lambda_zero = lambda_zero(q, spec.weights);
  std::optional<Eigen::VectorXd> warm;
  for (double lambda : grid) {
    SolveResult r;
    try {
      r = pmle_solve(q, spec.weights, lambda, warm, opts);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "path failed at lambda = " << lambda << ": " << e.what();
      fail(e.kind(), msg.str());
    }
    warm = r.beta;
    path.lambdas.push_back(lambda);
    path.active.push_back(static_cast<int>((r.beta.array() != 0.0).count()));
    path.sweeps.push_back(r.sweeps);
    path.kkt.push_back(r.kkt_residual);
    path.betas.push_back(std::move(r.beta));
  }
  return path;
}

}  // namespace fhdgm
