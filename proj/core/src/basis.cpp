#include "fhdgm/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fhdgm/error.hpp"

namespace fhdgm {

namespace {

void check_domain(Interval domain) {
  if (!std::isfinite(domain.lo) || !std::isfinite(domain.hi) || !(domain.hi > domain.lo)) {
    fail(ErrorKind::domain, "basis domain must satisfy h1 < h2, got [" + std::to_string(domain.lo) +
                                ", " + std::to_string(domain.hi) + "]");
  }
}

}  // namespace

BasisSystem BasisSystem::bspline(Interval domain, int n_interior_knots, int degree) {
  check_domain(domain);
  if (degree < 0) fail(ErrorKind::parameter, "B-spline degree must be non-negative");
  if (n_interior_knots < 0) fail(ErrorKind::parameter, "interior knot count must be non-negative");

  BasisSystem b;
  b.kind_ = BasisKind::bspline;
  b.domain_ = domain;
  b.degree_ = degree;
  b.count_ = n_interior_knots + degree + 1;
  b.knots_.reserve(static_cast<std::size_t>(n_interior_knots + 2 * (degree + 1)));
  for (int i = 0; i <= degree; ++i) b.knots_.push_back(domain.lo);
  const double step = domain.length() / (n_interior_knots + 1);
  for (int i = 1; i <= n_interior_knots; ++i) b.knots_.push_back(domain.lo + step * i);
  for (int i = 0; i <= degree; ++i) b.knots_.push_back(domain.hi);
  return b;
}

BasisSystem BasisSystem::fourier(Interval domain, int count) {
  check_domain(domain);
  if (count < 1 || count % 2 == 0) {
    fail(ErrorKind::contract, "Fourier basis requires an odd positive count, got " + std::to_string(count));
  }
  BasisSystem b;
  b.kind_ = BasisKind::fourier;
  b.domain_ = domain;
  b.count_ = count;
  return b;
}

BasisSystem BasisSystem::from_spec(const BasisSpec& spec) {
  if (spec.kind == BasisKind::fourier) return fourier(spec.domain, spec.count);
  const int interior = spec.count - spec.degree - 1;
  if (interior < 0) {
    fail(ErrorKind::parameter, "B-spline count " + std::to_string(spec.count) + " is below degree + 1 = " +
                                   std::to_string(spec.degree + 1));
  }
  return bspline(spec.domain, interior, spec.degree);
}

BasisSpec BasisSystem::spec() const {
  return BasisSpec{kind_, count_, kind_ == BasisKind::bspline ? degree_ : 0, domain_};
}

Eigen::VectorXd BasisSystem::eval(double h) const {
  Eigen::VectorXd out(count_);
  eval_into(h, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

void BasisSystem::eval_into(double h, std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(count_)) {
    fail(ErrorKind::shape, "basis output span has length " + std::to_string(out.size()) + ", expected " +
                               std::to_string(count_));
  }
  if (!std::isfinite(h) || !domain_.contains(h)) {
    fail(ErrorKind::range, "evaluation point " + std::to_string(h) + " outside basis domain [" +
                               std::to_string(domain_.lo) + ", " + std::to_string(domain_.hi) + "]");
  }
  if (kind_ == BasisKind::bspline) {
    eval_bspline(h, out);
  } else {
    eval_fourier(h, out);
  }
}

Eigen::MatrixXd BasisSystem::eval_matrix(std::span<const double> points) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), count_);
  Eigen::VectorXd row(count_);
  for (std::size_t i = 0; i < points.size(); ++i) {
    eval_into(points[i], std::span<double>(row.data(), static_cast<std::size_t>(count_)));
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

// Cox-de Boor triangular scheme on the clamped knot vector. Only the degree+1
// functions supported on the knot span containing h are non-zero.
void BasisSystem::eval_bspline(double h, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const int p = degree_;
  const auto& t = knots_;

  // Span index s with t[s] <= h < t[s+1]; the right endpoint belongs to the last span.
  int s = count_ - 1;
  if (h < domain_.hi) {
    auto it = std::upper_bound(t.begin() + p, t.begin() + count_ + 1, h);
    s = static_cast<int>(std::distance(t.begin(), it)) - 1;
  }

  std::vector<double> n(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  n[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = h - t[s + 1 - j];
    right[j] = t[s + j] - h;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom > 0.0 ? n[r] / denom : 0.0;
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out[s - p + r] = n[r];
}

void BasisSystem::eval_fourier(double h, std::span<double> out) const {
  const double w = 2.0 * std::numbers::pi / period();
  const double x = h - domain_.lo;
  out[0] = 1.0;
  for (int j = 1; 2 * j < count_; ++j) {
    out[2 * j - 1] = std::sin(w * j * x);
    out[2 * j] = std::cos(w * j * x);
  }
}

Eigen::VectorXd functional_coefficient(const BasisSystem& basis, std::span<const double> coeffs,
                                       std::span<const double> grid) {
  if (coeffs.size() != static_cast<std::size_t>(basis.count())) {
    fail(ErrorKind::shape, "coefficient vector has length " + std::to_string(coeffs.size()) + ", basis has " +
                               std::to_string(basis.count()) + " functions");
  }
  const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
  return basis.eval_matrix(grid) * c;
}

std::string to_string(BasisKind kind) { return kind == BasisKind::bspline ? "bspline" : "fourier"; }

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "bspline") return BasisKind::bspline;
  if (name == "fourier") return BasisKind::fourier;
  fail(ErrorKind::config, "unknown basis kind '" + name + "' (expected bspline or fourier)");
}

}  // namespace fhdgm
