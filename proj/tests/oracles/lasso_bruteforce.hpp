// Exhaustive minimizer of 1/2 (b - b0)' A (b - b0) + c sum w_i |b_i| for small P:
// every sign pattern in {-1, 0, +1}^P is solved as an equality-constrained
// quadratic and kept only when the solution agrees with its pattern.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b0, const Eigen::VectorXd& w, double c,
                              const Eigen::VectorXd& b) {
  const Eigen::VectorXd d = b - b0;
  return 0.5 * d.dot(a * d) + c * w.cwiseProduct(b.cwiseAbs()).sum();
}

inline Eigen::VectorXd lasso_bruteforce(const Eigen::MatrixXd& a, const Eigen::VectorXd& b0, const Eigen::VectorXd& w,
                                        double c) {
  const int p = static_cast<int>(b0.size());
  int patterns = 1;
  for (int i = 0; i < p; ++i) patterns *= 3;
  Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
  double best_obj = lasso_objective(a, b0, w, c, best);
  for (int code = 0; code < patterns; ++code) {
    std::vector<int> sign(static_cast<std::size_t>(p));
    std::vector<int> support;
    int rest = code;
    for (int i = 0; i < p; ++i) {
      sign[static_cast<std::size_t>(i)] = rest % 3 - 1;
      rest /= 3;
      if (sign[static_cast<std::size_t>(i)] != 0) support.push_back(i);
    }
    if (support.empty()) continue;
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd as(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int si = support[static_cast<std::size_t>(i)];
      rhs(i) = (a.row(si) * b0)(0) - c * w(si) * sign[static_cast<std::size_t>(si)];
      for (Eigen::Index j = 0; j < m; ++j) as(i, j) = a(si, support[static_cast<std::size_t>(j)]);
    }
    const Eigen::VectorXd sol = as.fullPivLu().solve(rhs);
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(p);
    bool feasible = true;
    for (Eigen::Index i = 0; i < m; ++i) {
      const int si = support[static_cast<std::size_t>(i)];
      if (sol(i) * sign[static_cast<std::size_t>(si)] < 0.0) feasible = false;
      cand(si) = sol(i);
    }
    if (!feasible) continue;
    const double obj = lasso_objective(a, b0, w, c, cand);
    if (obj < best_obj) {
      best_obj = obj;
      best = cand;
    }
  }
  return best;
}

}  // namespace oracle
