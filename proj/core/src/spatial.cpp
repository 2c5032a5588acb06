#include "fhdgm/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "fhdgm/error.hpp"

namespace fhdgm {

std::size_t StationNetwork::index_of(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) fail(ErrorKind::lookup, "unknown station '" + id + "'");
  return static_cast<std::size_t>(std::distance(ids.begin(), it));
}

void StationNetwork::validate() const {
  if (ids.empty()) fail(ErrorKind::data, "station network is empty");
  if (ids.size() != coords.size()) fail(ErrorKind::shape, "station ids and coordinates differ in length");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) fail(ErrorKind::data, "duplicate station id '" + ids[i] + "'");
    const auto& c = coords[i];
    if (!std::isfinite(c[0]) || !std::isfinite(c[1])) {
      fail(ErrorKind::data, "non-finite coordinates for station '" + ids[i] + "'");
    }
    if (metric == Metric::geodesic && (c[0] < -90.0 || c[0] > 90.0)) {
      fail(ErrorKind::domain, "latitude " + std::to_string(c[0]) + " of station '" + ids[i] + "' outside [-90, 90]");
    }
  }
}

StationNetwork StationNetwork::subset(const std::vector<std::size_t>& indices) const {
  StationNetwork out;
  out.metric = metric;
  for (auto i : indices) {
    out.ids.push_back(ids.at(i));
    out.coords.push_back(coords.at(i));
  }
  return out;
}

Partition Partition::single(std::size_t n) {
  Partition p;
  p.groups.emplace_back(n);
  std::iota(p.groups[0].begin(), p.groups[0].end(), std::size_t{0});
  return p;
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

Eigen::MatrixXd distance_matrix(const StationNetwork& net) {
  net.validate();
  const auto n = static_cast<Eigen::Index>(net.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = net.coords[static_cast<std::size_t>(i)];
      const auto& b = net.coords[static_cast<std::size_t>(j)];
      const double dij = net.metric == Metric::geodesic ? haversine_km(a[0], a[1], b[0], b[1])
                                                        : std::hypot(a[0] - b[0], a[1] - b[1]);
      d(i, j) = dij;
      d(j, i) = dij;
    }
  }
  return d;
}

Eigen::MatrixXd exp_correlation(const Eigen::MatrixXd& distances, double theta, double jitter) {
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    fail(ErrorKind::parameter, "spatial range theta must be positive, got " + std::to_string(theta));
  }
  if (distances.rows() != distances.cols()) fail(ErrorKind::shape, "distance matrix must be square");
  Eigen::MatrixXd rho = (-distances.array() / theta).exp().matrix();
  rho.diagonal().array() = 1.0 + jitter;
  return rho;
}

Partition partition_stations(const StationNetwork& net, int k) {
  const std::size_t n = net.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    fail(ErrorKind::parameter, "partition size k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (k == 1) return Partition::single(n);

  // Work in id order so that every tie-break is independent of input order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return net.ids[a] < net.ids[b]; });
  const Eigen::MatrixXd full = distance_matrix(net);
  Eigen::MatrixXd d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          full(static_cast<Eigen::Index>(order[i]), static_cast<Eigen::Index>(order[j]));

  auto medoid_of = [&](const std::vector<std::size_t>& members) {
    std::size_t best = members.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (auto c : members) {
      double cost = 0.0;
      for (auto m : members) cost += d(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(m));
      if (cost < best_cost) {  // strict: earlier (smaller id) wins ties
        best_cost = cost;
        best = c;
      }
    }
    return best;
  };

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> medoids{medoid_of(all)};
  while (medoids.size() < static_cast<std::size_t>(k)) {
    std::size_t far = n;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (auto m : medoids) nearest = std::min(nearest, d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)));
      if (nearest > far_dist) {
        far_dist = nearest;
        far = i;
      }
    }
    medoids.push_back(far);
  }

  std::vector<std::size_t> label(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < medoids.size(); ++c) {
        if (medoids[c] == i) {
          best = c;
          break;
        }
        const double dc = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(medoids[c]));
        if (dc < best_d || (dc == best_d && medoids[c] < medoids[best])) {
          best_d = dc;
          best = c;
        }
      }
      label[i] = best;
    }
    bool changed = false;
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (label[i] == c) members.push_back(i);
      const auto m = medoid_of(members);
      if (m != medoids[c]) {
        medoids[c] = m;
        changed = true;
      }
    }
    if (!changed) break;
  }

  Partition p;
  p.groups.resize(medoids.size());
  for (std::size_t i = 0; i < n; ++i) p.groups[label[i]].push_back(order[i]);
  for (auto& g : p.groups) std::sort(g.begin(), g.end());
  auto min_id = [&](const std::vector<std::size_t>& g) {
    return *std::min_element(g.begin(), g.end(), [&](auto a, auto b) { return net.ids[a] < net.ids[b]; });
  };
  std::sort(p.groups.begin(), p.groups.end(),
            [&](const auto& a, const auto& b) { return net.ids[min_id(a)] < net.ids[min_id(b)]; });
  return p;
}

}  // namespace fhdgm
