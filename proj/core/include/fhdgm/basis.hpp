/**
 * @file basis.hpp
 * @brief Spline bases over a closed functional domain [h1, h2].
 *
 * Two families are supported:
 *  - clamped B-splines of arbitrary degree with equispaced interior knots,
 *    evaluated by the Cox-de Boor triangular scheme;
 *  - periodic Fourier bases with an odd number of functions laid out as
 *    (1, sin(w h), cos(w h), sin(2 w h), cos(2 w h), ...) with w = 2 pi / (h2 - h1).
 *
 * A BasisSystem is immutable after construction and every member is const,
 * so a single instance may be shared across threads.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fhdgm {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  [[nodiscard]] double length() const noexcept { return hi - lo; }
  [[nodiscard]] bool contains(double h) const noexcept { return h >= lo && h <= hi; }
  bool operator==(const Interval&) const = default;
};

enum class BasisKind { bspline, fourier };

/// User-facing description of a basis. For B-splines `count` is authoritative
/// and the interior knot count is derived as count - degree - 1.
struct BasisSpec {
  BasisKind kind = BasisKind::bspline;
  int count = 1;
  int degree = 3;  // ignored for fourier
  Interval domain{0.0, 24.0};

  bool operator==(const BasisSpec&) const = default;
};

class BasisSystem {
 public:
  /// Clamped B-spline basis with `n_interior_knots` equispaced interior knots.
  static BasisSystem bspline(Interval domain, int n_interior_knots, int degree);
  /// Periodic Fourier basis; `count` must be odd.
  static BasisSystem fourier(Interval domain, int count);
  static BasisSystem from_spec(const BasisSpec& spec);

  [[nodiscard]] BasisKind kind() const noexcept { return kind_; }
  [[nodiscard]] Interval domain() const noexcept { return domain_; }
  [[nodiscard]] int count() const noexcept { return count_; }
  [[nodiscard]] int degree() const noexcept { return degree_; }
  /// Full clamped knot vector (bspline only; empty for fourier).
  [[nodiscard]] std::span<const double> knots() const noexcept { return knots_; }
  [[nodiscard]] double period() const noexcept { return domain_.length(); }
  [[nodiscard]] BasisSpec spec() const;

  /// Values of all `count()` basis functions at h. Throws a range error
  /// when h lies outside the domain.
  [[nodiscard]] Eigen::VectorXd eval(double h) const;
  void eval_into(double h, std::span<double> out) const;

  /// n_points x count matrix with row i = eval(points[i]).
  [[nodiscard]] Eigen::MatrixXd eval_matrix(std::span<const double> points) const;

 private:
  BasisSystem() = default;

  void eval_bspline(double h, std::span<double> out) const;
  void eval_fourier(double h, std::span<double> out) const;

  BasisKind kind_ = BasisKind::bspline;
  Interval domain_;
  int count_ = 0;
  int degree_ = 0;
  std::vector<double> knots_;
};

/// curve(h) = sum_k B_k(h) coeffs_k at every grid point.
Eigen::VectorXd functional_coefficient(const BasisSystem& basis, std::span<const double> coeffs,
                                       std::span<const double> grid);

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

}  // namespace fhdgm
