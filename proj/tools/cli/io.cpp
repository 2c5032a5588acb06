#include "cli/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cli/config.hpp"
#include "fhdgm/error.hpp"

namespace fhdgm::cli {

namespace {

using nlohmann::json;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::filesystem::path& source, std::size_t line) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    fail(ErrorKind::data, source.string() + ":" + std::to_string(line) + ": '" + t + "' is not a number");
  }
  return value;
}

std::chrono::sys_days parse_date(const std::string& text, const std::filesystem::path& source, std::size_t line) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
    fail(ErrorKind::data, source.string() + ":" + std::to_string(line) + ": date '" + text + "' is not YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) fail(ErrorKind::data, source.string() + ":" + std::to_string(line) + ": invalid date '" + text + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd json_matrix(const json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(i)).size()) != c) fail(ErrorKind::data, "ragged matrix in artifact");
    m.row(i) = json_vector(j.at(static_cast<std::size_t>(i))).transpose();
  }
  return m;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::size_t CsvTable::column(const std::string& name, const std::filesystem::path& source) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  fail(ErrorKind::data, source.string() + ": missing column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                                " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(ErrorKind::data, path.string() + " is empty");
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::data, "failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::data, path.string() + " is not valid JSON: " + e.what());
  }
}

StationNetwork read_stations(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  StationNetwork net;
  const std::size_t id = t.column("station_id", path);
  std::size_t a = 0, b = 0;
  const auto has = [&](const char* name) { return std::find(t.header.begin(), t.header.end(), name) != t.header.end(); };
  if (has("lat") && has("lon")) {
    net.metric = Metric::geodesic;
    a = t.column("lat", path);
    b = t.column("lon", path);
  } else if (has("x_km") && has("y_km")) {
    net.metric = Metric::euclidean;
    a = t.column("x_km", path);
    b = t.column("y_km", path);
  } else {
    fail(ErrorKind::data, path.string() + ": expected columns lat,lon or x_km,y_km");
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    net.ids.push_back(t.rows[r][id]);
    net.coords.push_back({parse_double(t.rows[r][a], path, r + 2), parse_double(t.rows[r][b], path, r + 2)});
  }
  net.validate();
  return net;
}

void write_stations(const std::filesystem::path& path, const StationNetwork& net) {
  std::ostringstream os;
  os << (net.metric == Metric::geodesic ? "station_id,lat,lon\n" : "station_id,x_km,y_km\n");
  for (std::size_t i = 0; i < net.size(); ++i)
    os << net.ids[i] << ',' << format_number(net.coords[i][0]) << ',' << format_number(net.coords[i][1]) << '\n';
  write_text(path, os.str());
}

FunctionalDataset read_dataset(const std::filesystem::path& path, const StationNetwork& net,
                               const std::vector<std::string>& covariates) {
  const CsvTable t = read_csv(path);
  const std::size_t c_station = t.column("station_id", path), c_date = t.column("date", path),
                    c_hour = t.column("hour", path), c_y = t.column("y", path);
  std::vector<std::size_t> cov_cols;
  FunctionalDataset d;
  if (covariates.empty()) {
    for (std::size_t i = c_y + 1; i < t.header.size(); ++i) {
      cov_cols.push_back(i);
      d.covariate_names.push_back(t.header[i]);
    }
  } else {
    for (const auto& name : covariates) {
      cov_cols.push_back(t.column(name, path));
      d.covariate_names.push_back(name);
    }
  }
  if (t.rows.empty()) fail(ErrorKind::data, path.string() + " has no data rows");

  std::vector<std::chrono::sys_days> dates;
  dates.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) dates.push_back(parse_date(t.rows[r][c_date], path, r + 2));
  const auto first = *std::min_element(dates.begin(), dates.end());
  const auto last = *std::max_element(dates.begin(), dates.end());
  d.network = net;
  d.days = static_cast<int>((last - first).count()) + 1;
  d.first_date = format_date(first);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  d.y.resize(n);
  d.X.resize(n, static_cast<Eigen::Index>(cov_cols.size()));
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < net.size(); ++i) index[net.ids[i]] = static_cast<int>(i);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto it = index.find(row[c_station]);
    if (it == index.end()) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(r + 2) + ": station '" + row[c_station] + "' is not in the station file");
    }
    d.station.push_back(it->second);
    d.day.push_back(static_cast<int>((dates[r] - first).count()));
    d.hour.push_back(parse_double(row[c_hour], path, r + 2));
    const auto ri = static_cast<Eigen::Index>(r);
    d.y(ri) = row[c_y].empty() ? kMissing : parse_double(row[c_y], path, r + 2);
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      d.X(ri, static_cast<Eigen::Index>(j)) = parse_double(row[cov_cols[j]], path, r + 2);
    }
  }
  d.normalize();
  return d;
}

void write_dataset(const std::filesystem::path& path, const FunctionalDataset& data) {
  std::ostringstream os;
  os << "station_id,date,hour,y";
  for (const auto& c : data.covariate_names) os << ',' << c;
  os << '\n';
  const std::string first = data.first_date.empty() ? "2000-01-01" : data.first_date;
  std::vector<std::string> dates(static_cast<std::size_t>(data.days));
  for (int t = 0; t < data.days; ++t) dates[static_cast<std::size_t>(t)] = date_after(first, t);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    os << data.network.ids[static_cast<std::size_t>(data.station[r])] << ',' << dates[static_cast<std::size_t>(data.day[r])]
       << ',' << format_number(data.hour[r]) << ',' << format_number(data.y(ri));
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) os << ',' << format_number(data.X(ri, j));
    os << '\n';
  }
  write_text(path, os.str());
}

std::string date_after(const std::string& first, int day) {
  return format_date(parse_date(first, "date", 0) + std::chrono::days{day});
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorKind::data, "expected an array in artifact");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

nlohmann::json mle_to_json(const MLEResult& mle, const StandardizationRecord& record, const BasisSet& bases,
                           const StationNetwork& net) {
  json partition = json::array();
  for (const auto& g : mle.partition.groups) {
    json ids = json::array();
    for (auto s : g) ids.push_back(net.ids[s]);
    partition.push_back(ids);
  }
  return json{
      {"format", "fhdgm-mle/1"},
      {"bases", {{"mu", basis_to_json(bases.mu.spec())}, {"omega", basis_to_json(bases.omega.spec())}, {"sigma", basis_to_json(bases.sigma.spec())}}},
      {"intercept", mle.intercept},
      {"standardization",
       {{"covariates", record.covariate_names},
        {"covariate_mean", record.covariate_mean},
        {"covariate_sd", record.covariate_sd},
        {"response_mean", record.response_mean},
        {"response_sd", record.response_sd}}},
      {"beta0", vector_json(mle.beta0)},
      {"params",
       {{"g", vector_json(mle.params.g)}, {"v", vector_json(mle.params.v)}, {"theta", vector_json(mle.params.theta)}, {"sigma2", vector_json(mle.params.sigma2)}}},
      {"H0", matrix_json(mle.H0)},
      {"N", mle.N},
      {"loglik", mle.loglik()},
      {"loglik_trace", mle.loglik_trace},
      {"iterations", mle.iterations},
      {"converged", mle.converged},
      {"stationarity_projected", mle.stationarity_projected},
      {"rank_deficient", mle.rank_deficient},
      {"ridge", mle.ridge},
      {"partition", partition},
      {"steady_state_tol", mle.steady_state_tol},
      {"jitter", mle.jitter},
  };
}

FittedModel mle_from_json(const nlohmann::json& doc, const StationNetwork& net) {
  try {
    if (doc.at("format") != "fhdgm-mle/1") fail(ErrorKind::data, "unsupported MLE artifact format");
    FittedModel fm{};
    fm.mu = basis_from_json(doc.at("bases").at("mu"), "bases.mu");
    fm.omega = basis_from_json(doc.at("bases").at("omega"), "bases.omega");
    fm.sigma = basis_from_json(doc.at("bases").at("sigma"), "bases.sigma");
    const auto& st = doc.at("standardization");
    fm.record.covariate_names = st.at("covariates").get<std::vector<std::string>>();
    fm.record.covariate_mean = st.at("covariate_mean").get<std::vector<double>>();
    fm.record.covariate_sd = st.at("covariate_sd").get<std::vector<double>>();
    fm.record.response_mean = st.at("response_mean").get<double>();
    fm.record.response_sd = st.at("response_sd").get<double>();
    auto& m = fm.mle;
    m.intercept = doc.at("intercept").get<bool>();
    m.beta0 = json_vector(doc.at("beta0"));
    m.params.beta = m.beta0;
    const auto& p = doc.at("params");
    m.params.g = json_vector(p.at("g"));
    m.params.v = json_vector(p.at("v"));
    m.params.theta = json_vector(p.at("theta"));
    m.params.sigma2 = json_vector(p.at("sigma2"));
    m.H0 = json_matrix(doc.at("H0"));
    m.N = doc.at("N").get<std::size_t>();
    m.loglik_trace = doc.at("loglik_trace").get<std::vector<double>>();
    m.iterations = doc.at("iterations").get<int>();
    m.converged = doc.at("converged").get<bool>();
    m.stationarity_projected = doc.at("stationarity_projected").get<bool>();
    m.rank_deficient = doc.at("rank_deficient").get<bool>();
    m.ridge = doc.at("ridge").get<double>();
    m.steady_state_tol = doc.at("steady_state_tol").get<double>();
    m.jitter = doc.at("jitter").get<double>();
    for (const auto& g : doc.at("partition")) {
      std::vector<std::size_t> group;
      for (const auto& id : g) group.push_back(net.index_of(id.get<std::string>()));
      m.partition.groups.push_back(std::move(group));
    }
    fm.station_ids = net.ids;
    return fm;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed MLE artifact: ") + e.what());
  }
}

}  // namespace fhdgm::cli
