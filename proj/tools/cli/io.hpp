#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fhdgm/dataset.hpp"
#include "fhdgm/estimate.hpp"
#include "fhdgm/spatial.hpp"

namespace fhdgm::cli {

/// Shortest text that reads back to the same double.
std::string format_number(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name, const std::filesystem::path& source) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// "station_id,lat,lon" (geodesic) or "station_id,x_km,y_km" (euclidean).
StationNetwork read_stations(const std::filesystem::path& path);
void write_stations(const std::filesystem::path& path, const StationNetwork& net);

/// Long format "station_id,date,hour,y,<covariates>"; an empty y is missing.
/// `covariates` selects columns by name; empty means every column after y.
FunctionalDataset read_dataset(const std::filesystem::path& path, const StationNetwork& net,
                               const std::vector<std::string>& covariates = {});
void write_dataset(const std::filesystem::path& path, const FunctionalDataset& data);

/// Calendar date `day` days after `first` (YYYY-MM-DD).
std::string date_after(const std::string& first, int day);

struct FittedModel {
  MLEResult mle;
  StandardizationRecord record;
  BasisSpec mu, omega, sigma;
  std::vector<std::string> station_ids;
};

nlohmann::json mle_to_json(const MLEResult& mle, const StandardizationRecord& record, const BasisSet& bases,
                           const StationNetwork& net);
FittedModel mle_from_json(const nlohmann::json& doc, const StationNetwork& net);

nlohmann::json vector_json(const Eigen::VectorXd& v);
Eigen::VectorXd json_vector(const nlohmann::json& j);

}  // namespace fhdgm::cli
