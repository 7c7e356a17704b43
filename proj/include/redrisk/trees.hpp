#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "redrisk/execution.hpp"
#include "redrisk/matrix.hpp"

namespace redrisk::trees {

enum class Task { kClassification, kRegression };

struct TreeParams {
  Task task = Task::kClassification;
  // Leaf size floor as a fraction of the rows the tree is fit on.
  double min_leaf_fraction = 1.0 / 64.0;
  // Lower bound on the floor in rows.
  std::size_t min_leaf_rows = 1;
  // Features drawn (without replacement) at every node; 0 means all candidates.
  std::size_t features_per_split = 0;
  std::uint64_t seed = 0;
  Execution execution = Execution::kParallel;
};

void validate(const TreeParams& params);

// floor(fraction * n), at least `minimum`.
std::size_t leaf_floor(std::size_t n, double fraction, std::size_t minimum);

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;  // parent impurity minus weighted child impurity
};

// Training rows seen by one node. `rows` may repeat (bootstrap).
struct SplitProblem {
  const Matrix* x = nullptr;
  std::span<const double> targets;  // +1/-1 labels or real regression targets
  std::span<const std::size_t> rows;
  Task task = Task::kClassification;
  std::size_t min_leaf = 1;
};

// Best (feature, threshold) by impurity decrease over midpoints of sorted
// unique values. Ties go to the lowest feature index, then lowest threshold.
std::optional<Split> best_split(const SplitProblem& problem, std::span<const std::size_t> candidate_features,
                                Execution execution = Execution::kParallel);
// Serial reference for the kernel above.
std::optional<Split> best_split_reference(const SplitProblem& problem,
                                          std::span<const std::size_t> candidate_features);

struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  // Leaf: P(y = +1) for classification, mean target for regression.
  double value = 0.0;
  std::uint32_t n_rows = 0;
  double impurity_decrease = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const Node&) const = default;
};

class Tree {
 public:
  Tree() = default;
  Tree(Task task, std::size_t n_features, std::vector<Node> nodes);

  Task task() const { return task_; }
  std::size_t n_features() const { return n_features_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t leaf_count() const;

  // x < threshold goes left. Throws ConfigError on arity mismatch.
  double predict(std::span<const double> x) const;
  const Node& leaf_for(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& j);

  bool operator==(const Tree&) const = default;

 private:
  Task task_ = Task::kClassification;
  std::size_t n_features_ = 0;
  std::vector<Node> nodes_;
};

// Grows a tree on the given rows (duplicates allowed) with candidate features
// restricted to `allowed_features` (empty: all columns).
Tree fit_tree(const Matrix& x, std::span<const double> targets, std::span<const std::size_t> rows,
              std::span<const std::size_t> allowed_features, const TreeParams& params);

Tree fit_classification_tree(const Matrix& x, std::span<const int> labels, const TreeParams& params);
Tree fit_regression_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params);

double gini(double positives, double total);

}  // namespace redrisk::trees
