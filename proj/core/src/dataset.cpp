#include "fhdgm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "fhdgm/error.hpp"

namespace fhdgm {

std::size_t FunctionalDataset::observed_count() const {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) c += std::isnan(y(i)) ? 0 : 1;
  return c;
}

std::vector<std::size_t> FunctionalDataset::curve_keys() const {
  std::vector<std::size_t> keys;
  keys.reserve(rows());
  for (std::size_t r = 0; r < rows(); ++r) keys.push_back(curve_of(r));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

void FunctionalDataset::validate() const {
  const std::size_t n = rows();
  if (day.size() != n || hour.size() != n || static_cast<std::size_t>(y.size()) != n ||
      static_cast<std::size_t>(X.rows()) != n) {
    fail(ErrorKind::shape, "dataset columns differ in length");
  }
  if (static_cast<std::size_t>(X.cols()) != covariate_names.size()) {
    fail(ErrorKind::shape, "covariate names do not match covariate columns");
  }
  if (days < 1) fail(ErrorKind::data, "dataset must span at least one day");
  for (std::size_t r = 0; r < n; ++r) {
    if (station[r] < 0 || static_cast<std::size_t>(station[r]) >= network.size()) {
      fail(ErrorKind::lookup, "row " + std::to_string(r) + " references an unknown station");
    }
    if (day[r] < 0 || day[r] >= days) fail(ErrorKind::data, "row " + std::to_string(r) + " has day outside [0, T)");
    if (!std::isfinite(hour[r])) fail(ErrorKind::data, "row " + std::to_string(r) + " has a non-finite hour");
    if (std::isinf(y(static_cast<Eigen::Index>(r)))) fail(ErrorKind::data, "row " + std::to_string(r) + " has an infinite response");
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (!std::isfinite(X(static_cast<Eigen::Index>(r), j))) {
        fail(ErrorKind::data, "row " + std::to_string(r) + " has a non-finite value for covariate '" +
                                  covariate_names[static_cast<std::size_t>(j)] + "'");
      }
    }
  }
  if (observed_count() == 0) fail(ErrorKind::data, "dataset contains no observed response");
}

void FunctionalDataset::validate_domain(const BasisSystem& basis) const {
  for (std::size_t r = 0; r < rows(); ++r) {
    if (!basis.domain().contains(hour[r])) {
      fail(ErrorKind::range, "hour " + std::to_string(hour[r]) + " at row " + std::to_string(r) +
                                 " outside basis domain");
    }
  }
}

void FunctionalDataset::normalize() {
  network.validate();
  const std::size_t n = rows();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return std::tie(day[a], station[a], hour[a]) < std::tie(day[b], station[b], hour[b]);
  });
  auto permute = [&](auto& v) {
    auto copy = v;
    for (std::size_t i = 0; i < n; ++i) v[i] = copy[idx[i]];
  };
  if (day.size() == n && hour.size() == n && static_cast<std::size_t>(y.size()) == n &&
      static_cast<std::size_t>(X.rows()) == n) {
    permute(station);
    permute(day);
    permute(hour);
    Eigen::VectorXd y2(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd x2(static_cast<Eigen::Index>(n), X.cols());
    for (std::size_t i = 0; i < n; ++i) {
      y2(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
      x2.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
    }
    y = std::move(y2);
    X = std::move(x2);
  }
  validate();
}

Eigen::MatrixXd fixed_effects_design(const FunctionalDataset& data, const BasisSystem& mu, bool intercept) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  const int p = data.covariates();
  const int k = mu.count();
  const int blocks = p + (intercept ? 1 : 0);
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(blocks) * k);
  Eigen::VectorXd b(k);
  for (Eigen::Index r = 0; r < n; ++r) {
    mu.eval_into(data.hour[static_cast<std::size_t>(r)], std::span<double>(b.data(), static_cast<std::size_t>(k)));
    for (int j = 0; j < p; ++j) design.row(r).segment(static_cast<Eigen::Index>(j) * k, k) = data.X(r, j) * b.transpose();
    if (intercept) design.row(r).segment(static_cast<Eigen::Index>(p) * k, k) = b.transpose();
  }
  return design;
}

}  // namespace fhdgm
