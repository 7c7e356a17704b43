#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "redrisk/matrix.hpp"

namespace redrisk::linear {

// Column statistics from the training rows. Columns with (population) standard
// deviation below 1e-12 are dropped: their weight is pinned at zero.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> kept;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  void apply_row(std::span<const double> x, std::span<double> out) const;
  std::size_t kept_count() const;
};

struct LassoOptions {
  double tolerance = 1e-6;
  std::size_t max_sweeps = 1000;
};

// Weights live on the standardized scale.
struct LassoModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<double> objective_history;  // objective after each sweep
  std::vector<std::string> warnings;

  std::size_t nonzero_count() const;
  std::size_t zero_count() const { return weights.size() - nonzero_count(); }
  nlohmann::json to_json() const;
  static LassoModel from_json(const nlohmann::json& j);
};

// Minimizes mean log(1 + exp(-y(w.z + b))) + alpha * |w|_1 over standardized
// z by cyclic coordinate descent. `warm` (same standardization) seeds the
// weights. Throws DataError on a single class, ConfigError on alpha < 0.
LassoModel fit_lasso_logistic(const Matrix& x, std::span<const int> y, double alpha, const LassoOptions& options = {},
                              const LassoModel* warm = nullptr);

// Smallest penalty at which every weight is zero.
double alpha_max(const Matrix& x, std::span<const int> y);

// `count` log-spaced values from alpha_max down to alpha_max / ratio.
std::vector<double> default_grid(double alpha_max, std::size_t count = 20, double ratio = 1000.0);

// Subgradient residuals on the training data: max over zero weights of
// (|g_j| - alpha)+ and over nonzero weights of |g_j + alpha sign(w_j)|.
double kkt_violation(const LassoModel& model, const Matrix& x, std::span<const int> y);

struct GridPoint {
  double alpha = 0.0;
  double f_measure = 0.0;
  std::size_t nonzero = 0;
  bool converged = false;
};

struct TuneResult {
  double best_alpha = 0.0;
  LassoModel model;
  std::vector<GridPoint> path;  // in grid order
};

// Fits every grid value on the training rows (largest first, warm started) and
// keeps the best validation F-measure; ties go to the larger alpha. An empty
// grid selects default_grid.
TuneResult tune_penalty(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_val,
                        std::span<const int> y_val, std::vector<double> grid = {}, const LassoOptions& options = {});

struct LogisticPrediction {
  double probability = 0.5;
  int label = 1;
};

LogisticPrediction predict_logistic(const LassoModel& model, std::span<const double> x);

}  // namespace redrisk::linear
