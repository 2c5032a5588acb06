#include "cli/commands.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "cli/io.hpp"
#include "fhdgm/error.hpp"
#include "fhdgm/simulate.hpp"

namespace fhdgm::cli {

namespace {

using nlohmann::json;

struct Inputs {
  StationNetwork network;
  FunctionalDataset data;
};

Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  in.network = read_stations(cfg.stations_path());
  in.data = read_dataset(cfg.data_path(), in.network, cfg.covariates);
  return in;
}

struct Model {
  FittedModel fitted;
  BasisSet bases;
};

Model load_model(const RunConfig& cfg, const StationNetwork& net) {
  FittedModel fm = mle_from_json(read_json(cfg.out / "mle.json"), net);
  BasisSet bases{BasisSystem::from_spec(fm.mu), BasisSystem::from_spec(fm.omega), BasisSystem::from_spec(fm.sigma)};
  return Model{std::move(fm), std::move(bases)};
}

FunctionalDataset standardized_like(const FunctionalDataset& raw, const StandardizationRecord& record) {
  if (raw.covariate_names != record.covariate_names) {
    fail(ErrorKind::data, "data covariates do not match the covariates of the fitted model");
  }
  return apply_standardization(raw, record);
}

SimSetting configured_setting(const RunConfig& cfg) {
  SimSetting s = builtin_setting(cfg.simulate.setting);
  if (!cfg.simulate.stations_file.empty()) {
    s.network = read_stations(cfg.simulate.stations_file);
    if (!cfg.simulate.full_scale) s.days = cfg.simulate.days;
    return s;
  }
  return cfg.simulate.full_scale ? s : rescale(std::move(s), cfg.simulate.stations, cfg.simulate.days);
}

Eigen::VectorXd penalty_weights(const Model& m, double gamma) {
  std::vector<Eigen::Index> unpenalized;
  const auto p = m.fitted.mle.beta0.size();
  if (m.fitted.mle.intercept) {
    for (Eigen::Index i = p - m.bases.mu.count(); i < p; ++i) unpenalized.push_back(i);
  }
  return adaptive_weights(m.fitted.mle.beta0, gamma, kWeightFloor, unpenalized);
}

std::string coefficient_name(const Model& m, Eigen::Index i) {
  const auto j = static_cast<std::size_t>(i / m.bases.mu.count());
  return j < m.fitted.record.covariate_names.size() ? m.fitted.record.covariate_names[j] : "intercept";
}

std::vector<double> hour_grid(Interval domain, double step) {
  const auto count = static_cast<long>(std::floor(domain.length() / step + 1e-9));
  std::vector<double> grid;
  for (long i = 0; i <= count; ++i) grid.push_back(std::min(domain.lo + static_cast<double>(i) * step, domain.hi));
  return grid;
}

json selection_entry(const Selection& s, const Eigen::VectorXd& beta) {
  return json{{"lambda", s.lambda},
              {"index", s.index},
              {"active_set_size", (beta.array() != 0.0).count()},
              {"error", s.error}};
}

}  // namespace

void cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  const SimSetting setting = configured_setting(cfg);
  const SimulatedData sim = simulate_dataset(setting, cfg.simulate.seed);
  write_dataset(cfg.data_path(), sim.data);
  write_stations(cfg.stations_path(), sim.data.network);
  const json truth{
      {"setting", setting.name},
      {"description", setting.description},
      {"seed", cfg.simulate.seed},
      {"stations", sim.data.network.size()},
      {"days", setting.days},
      {"covariates", sim.data.covariate_names},
      {"beta", vector_json(sim.truth.beta)},
      {"g", vector_json(sim.truth.g)},
      {"v", vector_json(sim.truth.v)},
      {"theta", vector_json(sim.truth.theta)},
      {"sigma2", vector_json(sim.truth.sigma2)},
      {"bases", {{"mu", basis_to_json(setting.mu)}, {"omega", basis_to_json(setting.omega)}, {"sigma", basis_to_json(setting.sigma)}}},
  };
  write_json(cfg.out / "truth.json", truth);
  log << "simulated setting " << setting.name << ": " << sim.data.rows() << " rows -> " << cfg.data_path().string() << '\n';
}

void cmd_fit(const RunConfig& cfg, std::ostream& log) {
  const Inputs in = load_inputs(cfg);
  const BasisSet bases = cfg.bases();
  in.data.validate_domain(bases.mu);
  in.data.validate_domain(bases.omega);
  in.data.validate_domain(bases.sigma);
  const StandardizedData sd = standardize(in.data);
  const MLEResult mle = fit_mle(sd.data, bases, cfg.fit_options());
  write_json(cfg.out / "mle.json", mle_to_json(mle, sd.record, bases, in.network));
  log << "EM " << (mle.converged ? "converged" : "stopped") << " after " << mle.iterations
      << " iterations, log-likelihood " << format_number(mle.loglik()) << '\n';
  if (mle.stationarity_projected) log << "warning: a transition coefficient was held at the stationarity bound\n";
  if (mle.rank_deficient) log << "warning: design is rank deficient; a ridge of " << format_number(mle.ridge) << " was added\n";
}

void cmd_path(const RunConfig& cfg, std::ostream& log) {
  const StationNetwork net = read_stations(cfg.stations_path());
  const Model m = load_model(cfg, net);
  const QuadraticSurrogate q = surrogate_from(m.fitted.mle);
  PenaltySpec spec{cfg.grid(), penalty_weights(m, cfg.fit.gamma), cfg.fit.gamma};
  const PathResult path = solution_path(q, spec);

  std::ostringstream os;
  os << "lambda,coef_index,covariate,basis_index,value\n";
  const int k = m.bases.mu.count();
  for (std::size_t l = 0; l < path.lambdas.size(); ++l)
    for (Eigen::Index i = 0; i < path.betas[l].size(); ++i)
      os << format_number(path.lambdas[l]) << ',' << i << ',' << coefficient_name(m, i) << ',' << i % k << ','
         << format_number(path.betas[l](i)) << '\n';
  write_text(cfg.out / "path.csv", os.str());
  json summary{{"lambda_zero", path.lambda_zero}, {"lambda", path.lambdas}, {"active_set_size", path.active},
               {"kkt_residual", path.kkt}, {"sweeps", path.sweeps}, {"weights", vector_json(spec.weights)}};
  write_json(cfg.out / "path_summary.json", summary);
  log << "path over " << path.lambdas.size() << " lambda values; all coefficients vanish from lambda_zero = "
      << format_number(path.lambda_zero) << '\n';
}

void cmd_cv(const RunConfig& cfg, std::ostream& log) {
  const Inputs in = load_inputs(cfg);
  const Model m = load_model(cfg, in.network);
  const FunctionalDataset data = standardized_like(in.data, m.fitted.record);
  const QuadraticSurrogate q = surrogate_from(m.fitted.mle);
  PenaltySpec spec{cfg.grid(), penalty_weights(m, cfg.fit.gamma), cfg.fit.gamma};
  const FoldAssignment folds = make_folds(data, cfg.cv.folds, cfg.cv.seed);
  CVOptions opts;
  opts.error_scale = m.fitted.record.response_sd;
  opts.threads = cfg.threads;
  const CVResult cv = cv_run(data, m.bases, m.fitted.mle, spec, folds, opts);

  std::ostringstream os;
  os << "lambda,rmse,rmse_se,mae,mae_se\n";
  for (std::size_t l = 0; l < cv.lambdas.size(); ++l)
    os << format_number(cv.lambdas[l]) << ',' << format_number(cv.rmse[l]) << ',' << format_number(cv.rmse_se[l]) << ','
       << format_number(cv.mae[l]) << ',' << format_number(cv.mae_se[l]) << '\n';
  write_text(cfg.out / "cv.csv", os.str());

  json selection = json::object();
  json refit = json::object();
  for (auto c : kAllCriteria) {
    const Selection s = select_lambda(cv, c);
    const Eigen::VectorXd beta = refit_final(q, spec.weights, s.lambda).beta;
    const BackTransformed bt = back_transform(m.fitted.record, beta, m.bases.mu.count(), m.fitted.mle.intercept);
    selection[to_string(c)] = selection_entry(s, beta);
    refit[to_string(c)] = json{{"lambda", s.lambda},
                               {"beta_standardized", vector_json(beta)},
                               {"beta", vector_json(bt.beta)},
                               {"intercept", vector_json(bt.intercept)},
                               {"response_mean", bt.response_mean}};
  }
  selection["criterion"] = to_string(cfg.cv.criterion);
  selection["lambda_zero"] = lambda_zero(q, spec.weights);
  selection["folds"] = cfg.cv.folds;
  selection["seed"] = cfg.cv.seed;
  selection["warnings"] = cv.warnings;
  write_json(cfg.out / "selection.json", selection);
  write_json(cfg.out / "refit.json", refit);
  for (const auto& w : cv.warnings) log << "warning: " << w << '\n';
  const Selection chosen = select_lambda(cv, cfg.cv.criterion);
  log << "selected lambda " << format_number(chosen.lambda) << " by " << to_string(cfg.cv.criterion) << " (error "
      << format_number(chosen.error) << ")\n";
}

void cmd_predict(const RunConfig& cfg, std::ostream& log) {
  const Inputs in = load_inputs(cfg);
  const Model m = load_model(cfg, in.network);
  const FunctionalDataset data = standardized_like(in.data, m.fitted.record);
  ModelParams params = m.fitted.mle.params;
  std::string source = "unpenalized fit";
  if (std::filesystem::exists(cfg.out / "refit.json")) {
    const json refit = read_json(cfg.out / "refit.json");
    const std::string key = to_string(cfg.cv.criterion);
    if (refit.contains(key)) {
      params.beta = json_vector(refit.at(key).at("beta_standardized"));
      source = "penalized fit at " + key;
    }
  }
  std::vector<std::size_t> targets;
  for (std::size_t r = 0; r < data.rows(); ++r)
    if (!data.observed(r)) targets.push_back(r);
  const ObservationModel obs = make_observation_model(data, m.bases, m.fitted.mle.intercept);
  const Eigen::VectorXd pred =
      predict(params, data, obs, m.fitted.mle.partition, distance_matrix(data.network), targets);

  std::ostringstream os;
  os << "station_id,date,hour,prediction\n";
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto r = targets[j];
    const double y = m.fitted.record.response_mean + m.fitted.record.response_sd * pred(static_cast<Eigen::Index>(j));
    os << data.network.ids[static_cast<std::size_t>(data.station[r])] << ',' << date_after(data.first_date, data.day[r])
       << ',' << format_number(data.hour[r]) << ',' << format_number(y) << '\n';
  }
  write_text(cfg.out / "predictions.csv", os.str());
  log << "kriged " << targets.size() << " missing responses using the " << source << '\n';
}

void cmd_report(const RunConfig& cfg, std::ostream& log) {
  const StationNetwork net = read_stations(cfg.stations_path());
  const Model m = load_model(cfg, net);
  const auto& rec = m.fitted.record;
  const int k = m.bases.mu.count();
  const bool icpt = m.fitted.mle.intercept;
  const QuadraticSurrogate q = surrogate_from(m.fitted.mle);
  PenaltySpec spec{cfg.grid(), penalty_weights(m, cfg.fit.gamma), cfg.fit.gamma};
  const PathResult path = solution_path(q, spec);
  const std::filesystem::path dir = cfg.out / "report";

  std::ostringstream paths;
  paths << "lambda,log_lambda,coef_index,covariate,basis_index,value_standardized,value\n";
  for (std::size_t l = 0; l < path.lambdas.size(); ++l) {
    const BackTransformed bt = back_transform(rec, path.betas[l], k, icpt);
    const double lam = path.lambdas[l];
    for (Eigen::Index i = 0; i < path.betas[l].size(); ++i) {
      const double orig = i < bt.beta.size() ? bt.beta(i) : bt.intercept(i - bt.beta.size());
      paths << format_number(lam) << ',' << (lam > 0.0 ? format_number(std::log(lam)) : "") << ',' << i << ','
            << coefficient_name(m, i) << ',' << i % k << ',' << format_number(path.betas[l](i)) << ','
            << format_number(orig) << '\n';
    }
  }
  write_text(dir / "coefficient_paths.csv", paths.str());

  // Coefficient vectors to draw: the unpenalized fit and every selected refit.
  std::vector<std::pair<std::string, std::pair<double, Eigen::VectorXd>>> fits{{"mle", {0.0, m.fitted.mle.beta0}}};
  json selection = json::object();
  if (std::filesystem::exists(cfg.out / "refit.json")) {
    const json refit = read_json(cfg.out / "refit.json");
    for (auto c : kAllCriteria) {
      const auto key = to_string(c);
      if (refit.contains(key))
        fits.push_back({key, {refit.at(key).at("lambda").get<double>(), json_vector(refit.at(key).at("beta_standardized"))}});
    }
  }
  if (std::filesystem::exists(cfg.out / "selection.json")) selection = read_json(cfg.out / "selection.json");

  const std::vector<double> grid = hour_grid(m.bases.mu.domain(), cfg.report.grid_step);
  const Eigen::MatrixXd b = m.bases.mu.eval_matrix(grid);
  std::ostringstream fc;
  fc << "fit,lambda,covariate,hour,value_standardized,value\n";
  for (const auto& [label, fit] : fits) {
    const auto& [lam, beta] = fit;
    const BackTransformed bt = back_transform(rec, beta, k, icpt);
    const auto blocks = static_cast<Eigen::Index>(beta.size() / k);
    for (Eigen::Index j = 0; j < blocks; ++j) {
      const Eigen::VectorXd std_curve = b * beta.segment(j * k, k);
      const bool is_cov = j < static_cast<Eigen::Index>(rec.covariate_names.size());
      const Eigen::VectorXd orig_curve = b * (is_cov ? Eigen::VectorXd(bt.beta.segment(j * k, k)) : bt.intercept);
      const std::string name = is_cov ? rec.covariate_names[static_cast<std::size_t>(j)] : "intercept";
      for (std::size_t h = 0; h < grid.size(); ++h)
        fc << label << ',' << format_number(lam) << ',' << name << ',' << format_number(grid[h]) << ','
           << format_number(std_curve(static_cast<Eigen::Index>(h))) << ',' << format_number(orig_curve(static_cast<Eigen::Index>(h)))
           << '\n';
    }
  }
  write_text(dir / "functional_coefficients.csv", fc.str());

  if (std::filesystem::exists(cfg.out / "cv.csv")) {
    const CsvTable cv = read_csv(cfg.out / "cv.csv");
    std::ostringstream cc;
    cc << "lambda,log_lambda,rmse,rmse_se,mae,mae_se\n";
    for (const auto& row : cv.rows) {
      const double lam = std::stod(row[0]);
      cc << row[0] << ',' << (lam > 0.0 ? format_number(std::log(lam)) : "") << ',' << row[1] << ',' << row[2] << ','
         << row[3] << ',' << row[4] << '\n';
    }
    write_text(dir / "cv_curves.csv", cc.str());
  }

  json summary{{"lambda_zero", path.lambda_zero},
               {"loglik", m.fitted.mle.loglik()},
               {"em_iterations", m.fitted.mle.iterations},
               {"converged", m.fitted.mle.converged},
               {"covariates", rec.covariate_names},
               {"selection", selection},
               {"grid_step", cfg.report.grid_step}};
  write_json(dir / "summary.json", summary);
  log << "report written to " << dir.string() << '\n';
}

void cmd_montecarlo(const RunConfig& cfg, std::ostream& log) {
  const SimSetting setting = configured_setting(cfg);
  MonteCarloOptions mc;
  mc.replications = cfg.montecarlo.replications;
  mc.seed = cfg.simulate.seed;
  mc.test_fraction = cfg.montecarlo.test_fraction;
  mc.threads = cfg.threads;
  mc.pipeline.fit = cfg.fit_options();
  mc.pipeline.lambda_min = cfg.lambda.min;
  mc.pipeline.lambda_max = cfg.lambda.max;
  mc.pipeline.lambda_count = cfg.lambda.count;
  mc.pipeline.gamma = cfg.fit.gamma;
  mc.pipeline.folds = cfg.cv.folds;
  const MonteCarloReport rep = monte_carlo(setting, mc);

  json coefs = json::array();
  for (const auto& c : rep.coefficients) {
    json sel = json::object();
    for (std::size_t i = 0; i < kAllCriteria.size(); ++i)
      sel[to_string(kAllCriteria[i])] = {{"mean", c.mean[i]}, {"sd", c.sd[i]}, {"zero_frequency", c.zero_frequency[i]}};
    coefs.push_back({{"truth", c.truth}, {"mean_mle", c.mean_mle}, {"sd_mle", c.sd_mle}, {"selected", sel}});
  }
  json runs = json::array();
  for (const auto& r : rep.runs) {
    json lam = json::object(), rmse = json::object();
    for (std::size_t i = 0; i < kAllCriteria.size(); ++i) {
      lam[to_string(kAllCriteria[i])] = r.lambda_selected[i];
      rmse[to_string(kAllCriteria[i])] = r.test_rmse[i];
    }
    runs.push_back({{"replication", r.index}, {"ok", r.ok}, {"error", r.error}, {"lambda", lam},
                    {"test_rmse_mle", r.test_rmse_mle}, {"test_rmse", rmse}, {"em_iterations", r.em_iterations},
                    {"em_max_drop", r.em_max_drop}});
  }
  json lstar = json::object();
  for (std::size_t i = 0; i < kAllCriteria.size(); ++i) lstar[to_string(kAllCriteria[i])] = rep.lambda_star[i];
  write_json(cfg.out / "montecarlo.json", json{{"setting", rep.setting},
                                               {"replications", rep.replications},
                                               {"failures", rep.failures},
                                               {"coefficients", coefs},
                                               {"lambda_star", lstar},
                                               {"test_rmse_mle_mean", rep.test_rmse_mle_mean},
                                               {"test_rmse_min_rmse_mean", rep.test_rmse_min_mean},
                                               {"paired_t", rep.paired_t},
                                               {"runs", runs}});
  std::ostringstream os;
  os << "lambda,rmse,rmse_se,mae,mae_se\n";
  for (std::size_t l = 0; l < rep.rmse_mean.size(); ++l)
    os << format_number(rep.lambdas[l]) << ',' << format_number(rep.rmse_mean[l]) << ',' << format_number(rep.rmse_se[l])
       << ',' << format_number(rep.mae_mean[l]) << ',' << format_number(rep.mae_se[l]) << '\n';
  write_text(cfg.out / "montecarlo_curves.csv", os.str());
  log << rep.replications - rep.failures << " of " << rep.replications << " replications succeeded\n";
}

}  // namespace fhdgm::cli
