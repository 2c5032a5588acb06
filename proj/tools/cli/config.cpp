#include "cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fhdgm/error.hpp"

namespace fhdgm::cli {

namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::config, where_ + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::config, "'" + name(key) + "' has the wrong type");
    }
  }

  [[nodiscard]] const json* child(const std::string& key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!known_.count(item.key())) fail(ErrorKind::config, "unknown configuration key '" + name(item.key()) + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

void require(bool ok, const std::string& message) {
  if (!ok) fail(ErrorKind::config, message);
}

}  // namespace

nlohmann::json basis_to_json(const BasisSpec& spec) {
  json j{{"kind", to_string(spec.kind)}, {"count", spec.count}, {"domain", {spec.domain.lo, spec.domain.hi}}};
  if (spec.kind == BasisKind::bspline) j["degree"] = spec.degree;
  return j;
}

BasisSpec basis_from_json(const nlohmann::json& j, const std::string& where) {
  BasisSpec spec;
  Section s(j, where);
  std::string kind = "bspline";
  std::vector<double> domain{0.0, 24.0};
  s.get("kind", kind);
  s.get("count", spec.count);
  s.get("degree", spec.degree);
  s.get("domain", domain);
  s.finish();
  try {
    spec.kind = basis_kind_from_string(kind);
  } catch (const Error&) {
    fail(ErrorKind::config, "'" + where + ".kind' must be bspline or fourier");
  }
  require(domain.size() == 2 && domain[0] < domain[1], "'" + where + ".domain' must be [lo, hi] with lo < hi");
  spec.domain = Interval{domain[0], domain[1]};
  require(spec.count >= 1, "'" + where + ".count' must be positive");
  if (spec.kind == BasisKind::bspline) {
    require(spec.degree >= 0, "'" + where + ".degree' must be non-negative");
    require(spec.count >= spec.degree + 1, "'" + where + ".count' must be at least degree + 1");
  } else {
    require(spec.count % 2 == 1, "'" + where + ".count' must be odd for a fourier basis");
  }
  return spec;
}

BasisSet RunConfig::bases() const {
  return BasisSet{BasisSystem::from_spec(mu), BasisSystem::from_spec(omega), BasisSystem::from_spec(sigma)};
}

std::vector<double> RunConfig::grid() const {
  if (!lambda.values.empty()) return lambda.values;
  return lambda_grid(lambda.min, lambda.max, lambda.count);
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.em_tol = fit.em_tol;
  o.em_max_iter = fit.em_max_iter;
  o.partition_k = fit.partition_k;
  o.hessian_mode = fit.hessian_mode;
  o.intercept = fit.intercept;
  o.steady_state_tol = fit.steady_state_tol;
  o.threads = threads;
  return o;
}

RunConfig parse_config(const nlohmann::json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  std::string data, stations, out;
  root.get("data", data);
  root.get("stations", stations);
  root.get("out", out);
  root.get("covariates", cfg.covariates);
  root.get("threads", cfg.threads);
  cfg.data = data;
  cfg.stations = stations;
  if (!out.empty()) cfg.out = out;

  if (const json* b = root.child("basis")) {
    Section s(*b, "basis");
    if (const json* m = s.child("mu")) cfg.mu = basis_from_json(*m, "basis.mu");
    if (const json* m = s.child("omega")) cfg.omega = basis_from_json(*m, "basis.omega");
    if (const json* m = s.child("sigma")) cfg.sigma = basis_from_json(*m, "basis.sigma");
    s.finish();
  }
  if (const json* l = root.child("lambda")) {
    Section s(*l, "lambda");
    s.get("min", cfg.lambda.min);
    s.get("max", cfg.lambda.max);
    s.get("count", cfg.lambda.count);
    s.get("values", cfg.lambda.values);
    s.get("allow_missing_zero", cfg.lambda.allow_missing_zero);
    s.finish();
  }
  if (const json* c = root.child("cv")) {
    Section s(*c, "cv");
    std::string criterion = to_string(cfg.cv.criterion);
    s.get("folds", cfg.cv.folds);
    s.get("seed", cfg.cv.seed);
    s.get("criterion", criterion);
    s.finish();
    cfg.cv.criterion = criterion_from_string(criterion);
  }
  if (const json* f = root.child("fit")) {
    Section s(*f, "fit");
    std::string mode = "exact";
    s.get("em_tol", cfg.fit.em_tol);
    s.get("em_max_iter", cfg.fit.em_max_iter);
    s.get("partition_k", cfg.fit.partition_k);
    s.get("hessian_mode", mode);
    s.get("intercept", cfg.fit.intercept);
    s.get("steady_state_tol", cfg.fit.steady_state_tol);
    s.get("gamma", cfg.fit.gamma);
    s.finish();
    require(mode == "exact" || mode == "numeric", "'fit.hessian_mode' must be exact or numeric");
    cfg.fit.hessian_mode = mode == "exact" ? HessianMode::exact : HessianMode::numeric;
  }
  if (const json* m = root.child("simulate")) {
    Section s(*m, "simulate");
    s.get("setting", cfg.simulate.setting);
    s.get("stations", cfg.simulate.stations);
    s.get("days", cfg.simulate.days);
    s.get("full_scale", cfg.simulate.full_scale);
    s.get("seed", cfg.simulate.seed);
    s.get("stations_file", cfg.simulate.stations_file);
    s.finish();
  }
  if (const json* m = root.child("montecarlo")) {
    Section s(*m, "montecarlo");
    s.get("replications", cfg.montecarlo.replications);
    s.get("test_fraction", cfg.montecarlo.test_fraction);
    s.finish();
  }
  if (const json* r = root.child("report")) {
    Section s(*r, "report");
    s.get("grid_step", cfg.report.grid_step);
    s.finish();
  }
  root.finish();
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open configuration file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config, "configuration file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

void validate(const RunConfig& cfg) {
  require(cfg.threads >= 1, "'threads' must be at least 1");
  const auto& l = cfg.lambda;
  if (l.values.empty()) {
    require(l.min > 0.0 && l.max > l.min, "'lambda' needs 0 < min < max");
    require(l.count >= 2, "'lambda.count' must be at least 2");
  } else {
    for (std::size_t i = 0; i < l.values.size(); ++i) {
      require(l.values[i] >= 0.0, "'lambda.values' must be non-negative");
      require(i == 0 || l.values[i] < l.values[i - 1], "'lambda.values' must be strictly decreasing");
    }
    require(l.allow_missing_zero || l.values.back() == 0.0,
            "'lambda.values' must end with 0 (the unpenalized reference); set lambda.allow_missing_zero to override");
  }
  require(cfg.cv.folds >= 2, "'cv.folds' must be at least 2");
  require(cfg.fit.em_tol > 0.0, "'fit.em_tol' must be positive");
  require(cfg.fit.em_max_iter >= 1, "'fit.em_max_iter' must be at least 1");
  require(cfg.fit.partition_k >= 1, "'fit.partition_k' must be at least 1");
  require(cfg.fit.steady_state_tol >= 0.0, "'fit.steady_state_tol' must be non-negative");
  require(cfg.fit.gamma >= 0.0, "'fit.gamma' must be non-negative");
  require(cfg.simulate.stations >= 1 && cfg.simulate.days >= 1, "'simulate' needs positive stations and days");
  require(cfg.montecarlo.replications >= 1, "'montecarlo.replications' must be at least 1");
  require(cfg.montecarlo.test_fraction >= 0.0 && cfg.montecarlo.test_fraction < 1.0,
          "'montecarlo.test_fraction' must lie in [0, 1)");
  require(cfg.report.grid_step > 0.0, "'report.grid_step' must be positive");
}

}  // namespace fhdgm::cli
