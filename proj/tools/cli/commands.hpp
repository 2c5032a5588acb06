#pragma once

#include <iosfwd>

#include "cli/config.hpp"

namespace fhdgm::cli {

/// Each command reads its inputs from the configured paths and writes its
/// artifacts under cfg.out. Progress goes to `log`; artifacts carry no timing.
void cmd_simulate(const RunConfig& cfg, std::ostream& log);  // data.csv, stations.csv, truth.json
void cmd_fit(const RunConfig& cfg, std::ostream& log);       // mle.json
void cmd_path(const RunConfig& cfg, std::ostream& log);      // path.csv, path_summary.json
void cmd_cv(const RunConfig& cfg, std::ostream& log);        // cv.csv, selection.json, refit.json
void cmd_predict(const RunConfig& cfg, std::ostream& log);   // predictions.csv
void cmd_report(const RunConfig& cfg, std::ostream& log);    // report/
void cmd_montecarlo(const RunConfig& cfg, std::ostream& log);  // montecarlo.json, montecarlo_curves.csv

}  // namespace fhdgm::cli
