// Small randomized model instances shared by the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/basis.hpp"
#include "fhdgm/dataset.hpp"
#include "fhdgm/penalize.hpp"
#include "fhdgm/spatial.hpp"
#include "fhdgm/statespace.hpp"
#include "oracles/dense_gaussian.hpp"

namespace fixtures {

struct TinyInstance {
  fhdgm::FunctionalDataset data;
  fhdgm::BasisSet bases;
  fhdgm::ModelParams params;
};

inline fhdgm::BasisSystem bspline_with_count(int count, fhdgm::Interval domain = {0.0, 24.0}) {
  const int degree = std::min(count - 1, 2);
  return fhdgm::BasisSystem::bspline(domain, count - degree - 1, degree);
}

/// Random tiny instance: up to 3 stations, 4 days, 3 readings a day and two
/// random-effect basis functions, with some responses missing.
inline TinyInstance tiny_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int n = pick(1, 3), days = pick(1, 4), p = pick(1, 2), ko = pick(1, 2), ks = pick(1, 2);
  TinyInstance inst{fhdgm::FunctionalDataset{},
                    fhdgm::BasisSet{bspline_with_count(3), bspline_with_count(ko), bspline_with_count(ks)},
                    {}};
  auto& d = inst.data;
  d.network.metric = fhdgm::Metric::euclidean;
  for (int s = 0; s < n; ++s) {
    d.network.ids.push_back("s" + std::to_string(s));
    d.network.coords.push_back({100.0 * unif(rng), 100.0 * unif(rng)});
  }
  d.days = days;
  for (int j = 0; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j));
  std::vector<double> ys;
  std::vector<std::vector<double>> xs;
  for (int t = 0; t < days; ++t)
    for (int s = 0; s < n; ++s) {
      const int readings = pick(1, 3);
      std::vector<double> hours;
      for (int r = 0; r < readings; ++r) hours.push_back(24.0 * unif(rng));
      std::sort(hours.begin(), hours.end());
      for (double h : hours) {
        d.station.push_back(s);
        d.day.push_back(t);
        d.hour.push_back(h);
        ys.push_back(unif(rng) < 0.2 ? fhdgm::kMissing : normal(rng));
        std::vector<double> row;
        for (int j = 0; j < p; ++j) row.push_back(normal(rng));
        xs.push_back(row);
      }
    }
  if (std::all_of(ys.begin(), ys.end(), [](double y) { return std::isnan(y); })) ys.front() = 0.5;
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  d.X.resize(static_cast<Eigen::Index>(xs.size()), p);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (int j = 0; j < p; ++j) d.X(static_cast<Eigen::Index>(i), j) = xs[i][static_cast<std::size_t>(j)];
  d.normalize();

  auto& m = inst.params;
  m.beta.resize(3 * p);
  for (auto& b : m.beta) b = normal(rng);
  m.g.resize(ko);
  m.v.resize(ko);
  m.theta.resize(ko);
  for (int k = 0; k < ko; ++k) {
    m.g(k) = -0.9 + 1.8 * unif(rng);
    m.v(k) = 0.1 + 2.0 * unif(rng);
    m.theta(k) = unif(rng) < 0.25 ? 0.0 : 10.0 + 190.0 * unif(rng);
  }
  m.sigma2.resize(ks);
  for (int k = 0; k < ks; ++k) m.sigma2(k) = 0.2 + unif(rng);
  return inst;
}

/// Observed rows of a dataset in the oracle's row-by-row form.
inline std::vector<oracle::Observation> to_oracle(const TinyInstance& inst, const std::vector<std::size_t>& rows) {
  const auto obs = fhdgm::make_observation_model(inst.data, inst.bases);
  std::vector<oracle::Observation> out;
  for (std::size_t r : rows) {
    const auto i = static_cast<Eigen::Index>(r);
    oracle::Observation o;
    o.station = inst.data.station[r];
    o.day = inst.data.day[r];
    o.loading = obs.omega_basis.row(i).transpose();
    o.design = obs.design.row(i).transpose();
    o.noise_var = obs.sigma_basis.row(i).dot(inst.params.sigma2);
    o.y = inst.data.y(i);
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<std::size_t> observed_rows(const fhdgm::FunctionalDataset& d) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < d.rows(); ++r)
    if (d.observed(r)) rows.push_back(r);
  return rows;
}

inline oracle::LatentLaw latent_law(const TinyInstance& inst) {
  return {fhdgm::distance_matrix(inst.data.network), inst.params.g, inst.params.v, inst.params.theta};
}

/// Random negative-definite surrogate of dimension p.
inline fhdgm::QuadraticSurrogate random_surrogate(std::mt19937_64& rng, int p, bool diagonal = false) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.5, 5.0);
  fhdgm::QuadraticSurrogate q;
  q.beta0.resize(p);
  for (auto& b : q.beta0) b = normal(rng);
  Eigen::MatrixXd a;
  if (diagonal) {
    a = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) a(i, i) = unif(rng);
  } else {
    Eigen::MatrixXd r(p + 3, p);
    for (auto& x : r.reshaped()) x = normal(rng);
    a = r.transpose() * r + 0.05 * Eigen::MatrixXd::Identity(p, p);
  }
  q.H0 = -a;
  q.N = static_cast<std::size_t>(std::uniform_int_distribution<int>(5, 50)(rng));
  return q;
}

}  // namespace fixtures
