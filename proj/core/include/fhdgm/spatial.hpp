#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fhdgm {

inline constexpr double kEarthRadiusKm = 6371.0;

enum class Metric { geodesic, euclidean };

/// Monitoring stations. With the geodesic metric coords are (lat deg, lon deg);
/// with the euclidean metric they are planar (x km, y km).
struct StationNetwork {
  std::vector<std::string> ids;
  std::vector<std::array<double, 2>> coords;
  Metric metric = Metric::geodesic;

  [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
  /// Index of a station id; throws a lookup error when absent.
  [[nodiscard]] std::size_t index_of(const std::string& id) const;
  /// Unique ids, finite coordinates, at least one station, valid latitudes.
  void validate() const;
  [[nodiscard]] StationNetwork subset(const std::vector<std::size_t>& indices) const;
};

/// Disjoint groups of station indices (into the originating network) covering
/// every station once. Each group is sorted ascending; groups are ordered by
/// their smallest station id.
struct Partition {
  std::vector<std::vector<std::size_t>> groups;

  [[nodiscard]] std::size_t k() const noexcept { return groups.size(); }
  static Partition single(std::size_t n);
};

double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Symmetric n x n distance matrix in km.
Eigen::MatrixXd distance_matrix(const StationNetwork& net);

/// rho_ij = exp(-D_ij / theta). `jitter` is added to the diagonal; keep it at
/// zero unless the network contains coincident stations.
Eigen::MatrixXd exp_correlation(const Eigen::MatrixXd& distances, double theta, double jitter = 0.0);

/// Deterministic k-medoids on the network distance. Medoids are seeded by
/// farthest-point initialization starting from the overall medoid; all ties
/// break on station id, so the grouping does not depend on input order.
Partition partition_stations(const StationNetwork& net, int k);

}  // namespace fhdgm
