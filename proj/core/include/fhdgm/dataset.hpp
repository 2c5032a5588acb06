#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/basis.hpp"
#include "fhdgm/spatial.hpp"

namespace fhdgm {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Long-format functional observations: one row per (station, day, h).
///
/// Rows are kept sorted by (day, station, hour). A missing response is NaN;
/// covariates are always present. The within-day grid may differ across
/// (station, day).
struct FunctionalDataset {
  StationNetwork network;
  int days = 0;                           // T; day indices run 0..T-1
  std::vector<std::string> covariate_names;
  std::vector<int> station;               // index into network
  std::vector<int> day;
  std::vector<double> hour;
  Eigen::VectorXd y;                      // NaN = missing
  Eigen::MatrixXd X;                      // rows x p covariate values
  std::string first_date;                 // optional calendar label of day 0 (YYYY-MM-DD)

  [[nodiscard]] std::size_t rows() const noexcept { return station.size(); }
  [[nodiscard]] int covariates() const noexcept { return static_cast<int>(X.cols()); }
  [[nodiscard]] bool observed(std::size_t row) const { return !std::isnan(y(static_cast<Eigen::Index>(row))); }
  [[nodiscard]] std::size_t observed_count() const;

  /// Curve key of a row, station * days + day.
  [[nodiscard]] std::size_t curve_of(std::size_t row) const {
    return static_cast<std::size_t>(station[row]) * static_cast<std::size_t>(days) + static_cast<std::size_t>(day[row]);
  }
  /// Sorted distinct curve keys that contain at least one row.
  [[nodiscard]] std::vector<std::size_t> curve_keys() const;

  /// Sorts rows by (day, station, hour) and checks the invariants: shapes,
  /// index ranges, finite covariates, and at least one observed response.
  void normalize();
  void validate() const;
  /// Checks that every hour lies in the domain of `basis`.
  void validate_domain(const BasisSystem& basis) const;
};

/// Design matrix of the fixed effects, rows x (p * K_mu [+ K_mu]). Column
/// j * K_mu + k holds X_j(h) * B_k(h). When `intercept` is set, a trailing
/// block of K_mu columns holds B_k(h) alone.
Eigen::MatrixXd fixed_effects_design(const FunctionalDataset& data, const BasisSystem& mu, bool intercept = false);

}  // namespace fhdgm
