#pragma once

#include <span>
#include <vector>

namespace redrisk::eval {

struct Confusion {
  double recall = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

// Labels and predictions in {+1, -1}. Precision is 0 when nothing is predicted
// positive; F is 0 when R + P = 0. Throws DataError without a positive label.
Confusion confusion_metrics(std::span<const int> labels, std::span<const int> predicted);

double f_measure(double recall, double precision);

struct AucResult {
  double auc = 0.5;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  double se = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Rank-sum AUC with tie credit 1/2; 95% interval from the Hanley-McNeil
// standard error, clipped to [0, 1].
AucResult auc_mann_whitney(std::span<const int> labels, std::span<const double> scores);

double hanley_mcneil_se(double auc, std::size_t positives, std::size_t negatives);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score (descending), starting at (0, 0).
std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores);

// Trapezoidal area under roc_curve.
double auc_trapezoid(std::span<const int> labels, std::span<const double> scores);

}  // namespace redrisk::eval
