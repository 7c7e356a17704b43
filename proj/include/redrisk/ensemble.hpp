#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "redrisk/execution.hpp"
#include "redrisk/matrix.hpp"
#include "redrisk/trees.hpp"

namespace redrisk::ensemble {

struct ScoredLabel {
  double score = 0.0;
  int label = -1;
};

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  std::size_t n_trees = 25;
  // 0 selects floor(sqrt(p)), at least 1.
  std::size_t features_per_split = 0;
  double min_leaf_fraction = 1.0 / 64.0;
  std::size_t min_leaf_rows = 2;
  bool bootstrap = true;
  std::uint64_t seed = 1;
  Execution execution = Execution::kParallel;
};

std::size_t default_features_per_split(std::size_t p);

struct Forest {
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<trees::Tree> trees;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);
};

// Throws DataError unless both classes are present.
Forest fit_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params);

// Mean positive-class leaf probability; label +1 iff score >= 0.5.
ScoredLabel predict_forest(const Forest& forest, std::span<const double> x);
ScoredLabel forest_decision(double score);

// ---------------------------------------------------------------------------
// Stochastic gradient boosting with the logistic loss log(1 + exp(-yF)).

struct GbmParams {
  std::size_t n_learners = 200;
  double rho = 0.5;
  // 0 selects the defaults: m = min(floor(p/3), floor(sqrt(n))) and floor(m/3),
  // both at least 1.
  std::size_t learner_features = 0;
  std::size_t split_features = 0;
  double lr_start = 0.001;
  double lr_cap = 0.1;
  double min_leaf_fraction = 1.0 / 64.0;
  std::size_t min_leaf_rows = 2;
  std::uint64_t seed = 1;
  Execution execution = Execution::kParallel;
};

void validate(const GbmParams& params);
std::size_t default_learner_features(std::size_t p, std::size_t n);
std::size_t default_split_features(std::size_t learner_features);

struct GbmStep {
  double step = 0.0;
  trees::Tree tree;
  std::vector<std::size_t> features;
};

struct GbmModel {
  GbmParams params;
  std::size_t n_features = 0;
  double intercept = 0.0;
  std::vector<GbmStep> steps;

  nlohmann::json to_json() const;
  static GbmModel from_json(const nlohmann::json& j);
};

// Per-round bookkeeping from fit_gbm.
struct GbmTrace {
  std::vector<double> train_loss;  // mean loss after each round (rejected rounds repeat)
  std::vector<double> step;        // line-search result per round
  std::vector<bool> accepted;
  std::vector<double> mean_abs_margin;
  double initial_loss = 0.0;
};

double log_loss(int y, double f);
double mean_log_loss(std::span<const int> y, std::span<const double> f);

// Negative functional gradient y / (1 + exp(yF)).
std::vector<double> gbm_pseudo_residuals(std::span<const int> y, std::span<const double> f);

// Walks lr_start, 2*lr_start, ... capped at lr_cap while the mean loss of
// f + lambda * h keeps strictly decreasing; returns the last improving lambda,
// or lr_start when the first doubling does not improve.
double line_search_step(std::span<const double> tree_outputs, std::span<const int> y,
                        std::span<const double> current_f, double lr_start, double lr_cap);

GbmModel fit_gbm(const Matrix& x, std::span<const int> y, const GbmParams& params, GbmTrace* trace = nullptr);

// F(x) = F0 + sum_t step_t * h_t(x); label +1 iff F(x) >= 0.
ScoredLabel predict_gbm(const GbmModel& model, std::span<const double> x);

}  // namespace redrisk::ensemble
