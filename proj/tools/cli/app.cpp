#include "cli/app.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"

namespace fhdgm::cli {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::parameter:
    case ErrorKind::contract:
      return kExitConfig;
    case ErrorKind::data:
    case ErrorKind::domain:
    case ErrorKind::range:
    case ErrorKind::shape:
    case ErrorKind::lookup:
      return kExitData;
    case ErrorKind::numeric:
    case ErrorKind::solver:
    case ErrorKind::stationarity:
    case ErrorKind::variance:
      return kExitNumeric;
  }
  return kExitNumeric;
}

int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  CLI::App app{"Functional hidden dynamic geostatistical models with adaptive-LASSO selection", "fhdgm"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration")->envname("FHDGM_CONFIG");
  app.add_option("--seed", seed, "seed for simulation, folds and Monte Carlo streams")->envname("FHDGM_SEED");
  app.add_option("--threads", threads, "maximum concurrent folds, replications or blocks")->envname("FHDGM_THREADS");
  app.add_option("--out", out, "output directory")->envname("FHDGM_OUT");

  using Command = std::function<void(const RunConfig&, std::ostream&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"simulate", "generate a synthetic dataset for a built-in setting", cmd_simulate},
      {"fit", "maximum-likelihood fit by EM and the Hessian in beta", cmd_fit},
      {"path", "adaptive-LASSO solution path over the lambda grid", cmd_path},
      {"cv", "K-fold cross-validation, lambda selection and refit", cmd_cv},
      {"predict", "krige the missing responses of the data file", cmd_predict},
      {"report", "plot-ready bundle of paths, functional coefficients and CV curves", cmd_report},
      {"montecarlo", "repeated simulate-fit-select study for a built-in setting", cmd_montecarlo},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(config_path);
    if (!out.empty()) cfg.out = out;
    if (seed) {
      cfg.cv.seed = *seed;
      cfg.simulate.seed = *seed;
    }
    if (threads) cfg.threads = *threads;
    validate(cfg);
    for (const auto& [name, help, fn] : commands) {
      if (app.got_subcommand(name)) fn(cfg, log);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace fhdgm::cli
