#include "redrisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "redrisk/error.hpp"

namespace redrisk::eval {

namespace {

void count_classes(std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  pos = 0;
  neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++pos;
    } else if (y == -1) {
      ++neg;
    } else {
      throw DataError("labels must be +1 or -1, got " + std::to_string(y));
    }
  }
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void check_scores(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DataError("label and score counts differ");
  for (double s : scores) {
    if (std::isnan(s)) throw DataError("score is NaN");
  }
}

}  // namespace

double f_measure(double recall, double precision) {
  const double denom = recall + precision;
  return denom > 0.0 ? 2.0 * recall * precision / denom : 0.0;
}

Confusion confusion_metrics(std::span<const int> labels, std::span<const int> predicted) {
  if (labels.size() != predicted.size()) throw DataError("label and prediction counts differ");
  std::size_t pos = 0;
  std::size_t neg = 0;
  count_classes(labels, pos, neg);
  if (pos == 0) throw DataError("no positive labels; recall is undefined");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predicted[i];
    if (p != 1 && p != -1) throw DataError("predictions must be +1 or -1");
    if (p == 1 && labels[i] == 1) ++c.true_positives;
    if (p == 1 && labels[i] == -1) ++c.false_positives;
    if (p == -1 && labels[i] == 1) ++c.false_negatives;
  }
  const double tp = static_cast<double>(c.true_positives);
  c.recall = tp / static_cast<double>(c.true_positives + c.false_negatives);
  const std::size_t predicted_pos = c.true_positives + c.false_positives;
  c.precision = predicted_pos > 0 ? tp / static_cast<double>(predicted_pos) : 0.0;
  c.f_measure = f_measure(c.recall, c.precision);
  return c;
}

double hanley_mcneil_se(double auc, std::size_t positives, std::size_t negatives) {
  const double a = auc;
  const double q1 = a / (2.0 - a);
  const double q2 = 2.0 * a * a / (1.0 + a);
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  const double var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
  return std::sqrt(std::max(0.0, var));
}

AucResult auc_mann_whitney(std::span<const int> labels, std::span<const double> scores) {
  check_scores(labels, scores);
  AucResult r;
  count_classes(labels, r.positives, r.negatives);
  if (r.positives == 0 || r.negatives == 0) throw DataError("AUC needs both classes");

  // Midranks over ascending scores.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) ++pos_in_group;
      ++j;
    }
    // Ranks i+1..j, doubled to stay in integers.
    const double midrank2 = static_cast<double>(i + 1 + j);
    rank_sum += midrank2 * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(r.positives);
  const double nn = static_cast<double>(r.negatives);
  const double u2 = rank_sum - np * (np + 1.0);  // twice the Mann-Whitney U
  r.auc = u2 / (2.0 * np * nn);
  r.se = hanley_mcneil_se(r.auc, r.positives, r.negatives);
  r.ci_lo = std::clamp(r.auc - 1.96 * r.se, 0.0, 1.0);
  r.ci_hi = std::clamp(r.auc + 1.96 * r.se, 0.0, 1.0);
  return r;
}

std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
  check_scores(labels, scores);
  std::size_t pos = 0;
  std::size_t neg = 0;
  count_classes(labels, pos, neg);
  if (pos == 0 || neg == 0) throw DataError("ROC curve needs both classes");
  const auto order = descending_order(scores);
  std::vector<RocPoint> points{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                      static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return points;
}

double auc_trapezoid(std::span<const int> labels, std::span<const double> scores) {
  const auto points = roc_curve(labels, scores);
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

}  // namespace redrisk::eval
