/**
 * @file crossval.hpp
 * @brief K-fold cross-validation over whole curves, lambda selection, final refit.
 *
 * The fold unit is the (station, day) curve. Each fold keeps the full-data
 * random-effect parameters fixed, recomputes its own surrogate by whitened
 * GLS on the training curves, solves the lambda path, and kriges the held-out
 * curves with their responses treated as missing.
 *
 * Kriging predictions are affine in beta: the smoothed state of
 * y - X beta is S(y) - S(X) beta, so every held-out prediction is
 * c + M beta with c and M computed once per fold.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhdgm/estimate.hpp"
#include "fhdgm/penalize.hpp"

namespace fhdgm {

struct FoldAssignment {
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> keys;  // sorted curve keys
  std::vector<int> fold;          // fold index of keys[i]

  [[nodiscard]] int fold_of(std::size_t key) const;
  /// 1 for rows used for training (curve outside `held_out`), 0 otherwise.
  [[nodiscard]] std::vector<char> training_mask(const FunctionalDataset& data, int held_out) const;
  /// Observed rows whose curve belongs to `held_out`.
  [[nodiscard]] std::vector<std::size_t> test_rows(const FunctionalDataset& data, int held_out) const;
};

/// Uniform random assignment of curves to K folds with sizes differing by at most one.
FoldAssignment make_folds(const FunctionalDataset& data, int K, std::uint64_t seed);

/// Held-out predictions as an affine function of beta.
struct LinearPredictor {
  std::vector<std::size_t> rows;
  Eigen::VectorXd offset;  // B_omega' S(y)
  Eigen::MatrixXd slope;   // X - B_omega' S(X)

  [[nodiscard]] Eigen::VectorXd operator()(const Eigen::VectorXd& beta) const { return offset + slope * beta; }
};

/// Conditions on the rows allowed by `row_mask` and predicts `targets`.
LinearPredictor linear_predictor(const ModelParams& params, const FunctionalDataset& data, const ObservationModel& obs,
                                 const Partition& partition, const Eigen::MatrixXd& distances,
                                 std::span<const char> row_mask, std::span<const std::size_t> targets, double jitter = 0.0,
                                 int threads = 1);

struct CVOptions {
  /// Multiplies errors back to original units (the response standard deviation).
  double error_scale = 1.0;
  SolverOptions solver;
  int threads = 1;
};

struct FoldDiagnostics {
  bool flagged = false;
  std::string message;
  std::size_t train_curves = 0;
  std::size_t test_rows = 0;
  double lambda_zero = 0.0;
};

struct CVResult {
  std::vector<double> lambdas;
  std::vector<double> rmse, rmse_se, mae, mae_se;
  std::vector<std::vector<double>> fold_rmse, fold_mae;  // [fold][lambda]
  std::vector<FoldDiagnostics> folds;
  std::vector<std::string> warnings;
};

CVResult cv_run(const FunctionalDataset& data, const BasisSet& bases, const MLEResult& mle, const PenaltySpec& spec,
                const FoldAssignment& folds, const CVOptions& opts = {});

enum class Criterion { min_rmse, min_mae, rmse_1se, mae_1se };
inline constexpr std::array<Criterion, 4> kAllCriteria{Criterion::min_rmse, Criterion::min_mae, Criterion::rmse_1se,
                                                       Criterion::mae_1se};
std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

struct Selection {
  Criterion criterion = Criterion::min_rmse;
  std::size_t index = 0;
  double lambda = 0.0;
  double error = 0.0;
};

Selection select_lambda(const CVResult& cv, Criterion criterion);

/// Full-data penalized estimate at lambda (standardized units).
SolveResult refit_final(const QuadraticSurrogate& q, const Eigen::VectorXd& weights, double lambda,
                        const SolverOptions& opts = {});

struct PipelineOptions {
  FitOptions fit;
  double lambda_min = 1e-5;
  double lambda_max = 0.5;
  int lambda_count = 100;
  double gamma = 1.0;
  int folds = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  SolverOptions solver;
};

struct PipelineResult {
  StandardizationRecord record;
  MLEResult mle;
  PenaltySpec spec;
  PathResult path;
  CVResult cv;
  std::array<Selection, 4> selections;
  std::array<Eigen::VectorXd, 4> refits;  // standardized units, criterion order
};

/// Standardize, fit by ML, build the adaptive path, cross-validate, select
/// lambda by every criterion and refit.
PipelineResult run_pipeline(const FunctionalDataset& raw, const BasisSet& bases, const PipelineOptions& opts);

}  // namespace fhdgm
