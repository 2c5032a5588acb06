#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fhdgm/basis.hpp"
#include "fhdgm/crossval.hpp"
#include "fhdgm/estimate.hpp"

namespace fhdgm::cli {

struct LambdaConfig {
  double min = 1e-5;
  double max = 0.5;
  int count = 100;
  std::vector<double> values;  // explicit grid, overrides min/max/count
  bool allow_missing_zero = false;
};

struct CvConfig {
  int folds = 10;
  std::uint64_t seed = 1;
  Criterion criterion = Criterion::rmse_1se;
};

struct FitConfig {
  double em_tol = 1e-4;
  int em_max_iter = 200;
  int partition_k = 1;
  HessianMode hessian_mode = HessianMode::exact;
  bool intercept = false;
  double steady_state_tol = 0.0;
  double gamma = 1.0;
};

struct SimulateConfig {
  std::string setting = "III";
  int stations = 5;
  int days = 60;
  bool full_scale = false;
  std::uint64_t seed = 1;
  std::string stations_file;  // optional user coordinates
};

struct MonteCarloConfig {
  int replications = 50;
  double test_fraction = 0.1;
};

struct ReportConfig {
  double grid_step = 0.25;
};

struct RunConfig {
  std::filesystem::path data;      // long-format CSV; default <out>/data.csv
  std::filesystem::path stations;  // default <out>/stations.csv
  std::vector<std::string> covariates;  // empty = every column after y
  BasisSpec mu{BasisKind::bspline, 7, 3, {0.0, 24.0}};
  BasisSpec omega{BasisKind::bspline, 3, 2, {0.0, 24.0}};
  BasisSpec sigma{BasisKind::bspline, 3, 2, {0.0, 24.0}};
  LambdaConfig lambda;
  CvConfig cv;
  FitConfig fit;
  SimulateConfig simulate;
  MonteCarloConfig montecarlo;
  ReportConfig report;
  std::filesystem::path out = "out";
  int threads = 1;

  [[nodiscard]] std::filesystem::path data_path() const { return data.empty() ? out / "data.csv" : data; }
  [[nodiscard]] std::filesystem::path stations_path() const { return stations.empty() ? out / "stations.csv" : stations; }
  [[nodiscard]] BasisSet bases() const;
  [[nodiscard]] std::vector<double> grid() const;
  [[nodiscard]] FitOptions fit_options() const;
};

/// Parses and validates a configuration document. Unknown keys, wrong types
/// and out-of-range values raise config errors naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Checks every cross-field constraint; called after command-line overrides.
void validate(const RunConfig& cfg);

nlohmann::json basis_to_json(const BasisSpec& spec);
BasisSpec basis_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace fhdgm::cli
