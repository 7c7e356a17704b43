#include "redrisk/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "redrisk/error.hpp"
#include "redrisk/random.hpp"

namespace redrisk::trees {

namespace {

// Gains below this are treated as no improvement.
constexpr double kMinGain = 1e-12;

// Work below this many (row x feature) visits stays on one thread.
constexpr std::size_t kParallelWork = 1 << 15;

struct Candidate {
  bool found = false;
  Split split;
};

// Keeps `a` unless `b` is strictly better; callers visit features and
// thresholds in ascending order so earlier wins ties.
void keep_better(Candidate& a, const Candidate& b) {
  if (b.found && (!a.found || b.split.impurity_decrease > a.split.impurity_decrease)) a = b;
}

// An impure node with no improving split (XOR-like structure) still takes
// its first admissible split, recorded with zero decrease, so that unpruned
// trees can fit any conflict-free training set.
void consider(Candidate& best, std::size_t feature, double lo, double hi, double gain, bool impure) {
  const bool improves = gain > kMinGain && (!best.found || gain > best.split.impurity_decrease);
  if (!improves && (best.found || !impure)) return;
  double mid = 0.5 * (lo + hi);
  if (!(mid > lo)) mid = hi;
  best = {true, {feature, mid, improves ? gain : 0.0}};
}

Candidate best_for_feature(const SplitProblem& problem, std::size_t feature,
                           std::vector<std::pair<double, double>>& buffer) {
  const auto& x = *problem.x;
  const std::size_t n = problem.rows.size();
  buffer.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = problem.rows[i];
    buffer[i] = {x(r, feature), problem.targets[r]};
  }
  std::sort(buffer.begin(), buffer.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  Candidate best;
  if (buffer.front().first == buffer.back().first) return best;
  const double total_n = static_cast<double>(n);

  if (problem.task == Task::kClassification) {
    double total_pos = 0.0;
    for (const auto& [v, t] : buffer) total_pos += t > 0.0;
    const double parent = gini(total_pos, total_n);
    double left_pos = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_pos += buffer[i].second > 0.0;
      if (!(buffer[i].first < buffer[i + 1].first)) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < problem.min_leaf || nr < problem.min_leaf) continue;
      const double dl = static_cast<double>(nl);
      const double dr = static_cast<double>(nr);
      const double child = (dl * gini(left_pos, dl) + dr * gini(total_pos - left_pos, dr)) / total_n;
      const double gain = parent - child;
      consider(best, feature, buffer[i].first, buffer[i + 1].first, gain, parent > kMinGain);
    }
  } else {
    double mean = 0.0;
    for (const auto& [v, t] : buffer) mean += t;
    mean /= total_n;
    double total_sum = 0.0;
    double total_sq = 0.0;
    for (auto& [v, t] : buffer) {
      const double c = t - mean;
      total_sum += c;
      total_sq += c * c;
    }
    const double parent_sse = total_sq - total_sum * total_sum / total_n;
    double left_sum = 0.0;
    double left_sq = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double c = buffer[i].second - mean;
      left_sum += c;
      left_sq += c * c;
      if (!(buffer[i].first < buffer[i + 1].first)) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < problem.min_leaf || nr < problem.min_leaf) continue;
      const double dl = static_cast<double>(nl);
      const double dr = static_cast<double>(nr);
      const double right_sum = total_sum - left_sum;
      const double right_sq = total_sq - left_sq;
      const double child_sse = (left_sq - left_sum * left_sum / dl) + (right_sq - right_sum * right_sum / dr);
      const double gain = (parent_sse - child_sse) / total_n;
      consider(best, feature, buffer[i].first, buffer[i + 1].first, gain, parent_sse / total_n > kMinGain);
    }
  }
  return best;
}

std::vector<std::size_t> sorted_copy(std::span<const std::size_t> features) {
  std::vector<std::size_t> out(features.begin(), features.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double gini(double positives, double total) {
  if (total <= 0.0) return 0.0;
  const double p = positives / total;
  return 2.0 * p * (1.0 - p);
}

void validate(const TreeParams& params) {
  if (!(params.min_leaf_fraction > 0.0 && params.min_leaf_fraction <= 0.5)) {
    throw ConfigError("min_leaf_fraction must lie in (0, 0.5]");
  }
  if (params.min_leaf_rows < 1) throw ConfigError("min_leaf_rows must be at least 1");
}

std::size_t leaf_floor(std::size_t n, double fraction, std::size_t minimum) {
  const auto floor = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::max(floor, minimum);
}

std::optional<Split> best_split_reference(const SplitProblem& problem,
                                          std::span<const std::size_t> candidate_features) {
  if (problem.rows.size() < 2 || candidate_features.empty()) return std::nullopt;
  std::vector<std::pair<double, double>> buffer;
  Candidate best;
  for (std::size_t f : sorted_copy(candidate_features)) keep_better(best, best_for_feature(problem, f, buffer));
  if (!best.found) return std::nullopt;
  return best.split;
}

std::optional<Split> best_split(const SplitProblem& problem, std::span<const std::size_t> candidate_features,
                                Execution execution) {
  if (execution == Execution::kSerial || problem.rows.size() * candidate_features.size() < kParallelWork) {
    return best_split_reference(problem, candidate_features);
  }
  if (problem.rows.size() < 2 || candidate_features.empty()) return std::nullopt;
  const auto features = sorted_copy(candidate_features);
  std::vector<Candidate> per_feature(features.size());
  const auto count = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel
  {
    std::vector<std::pair<double, double>> buffer;
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) per_feature[i] = best_for_feature(problem, features[i], buffer);
  }
  Candidate best;
  for (const auto& c : per_feature) keep_better(best, c);
  if (!best.found) return std::nullopt;
  return best.split;
}

// ---------------------------------------------------------------------------

Tree::Tree(Task task, std::size_t n_features, std::vector<Node> nodes)
    : task_(task), n_features_(n_features), nodes_(std::move(nodes)) {}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

const Node& Tree::leaf_for(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw ConfigError("tree expects " + std::to_string(n_features_) + " features, got " + std::to_string(x.size()));
  }
  const Node* node = &nodes_.front();
  while (!node->is_leaf()) {
    node = &nodes_[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] < node->threshold ? node->left
                                                                                                        : node->right)];
  }
  return *node;
}

double Tree::predict(std::span<const double> x) const { return leaf_for(x).value; }

nlohmann::json Tree::to_json() const {
  nlohmann::json j;
  j["task"] = task_ == Task::kClassification ? "classification" : "regression";
  j["n_features"] = n_features_;
  std::vector<std::int32_t> feature, left, right;
  std::vector<double> threshold, value, gain;
  std::vector<std::uint32_t> n_rows;
  for (const auto& n : nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    n_rows.push_back(n.n_rows);
    gain.push_back(n.impurity_decrease);
  }
  j["feature"] = feature;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["value"] = value;
  j["n_rows"] = n_rows;
  j["impurity_decrease"] = gain;
  return j;
}

Tree Tree::from_json(const nlohmann::json& j) {
  const Task task = j.at("task").get<std::string>() == "classification" ? Task::kClassification : Task::kRegression;
  const auto feature = j.at("feature").get<std::vector<std::int32_t>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<std::int32_t>>();
  const auto right = j.at("right").get<std::vector<std::int32_t>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto n_rows = j.at("n_rows").get<std::vector<std::uint32_t>>();
  const auto gain = j.at("impurity_decrease").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
      n_rows.size() != n || gain.size() != n) {
    throw DataError("malformed tree entry");
  }
  std::vector<Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i], n_rows[i], gain[i]};
    if (!nodes[i].is_leaf() && (left[i] <= 0 || right[i] <= 0 || static_cast<std::size_t>(left[i]) >= n ||
                                static_cast<std::size_t>(right[i]) >= n)) {
      throw DataError("malformed tree entry: child index out of range");
    }
  }
  return Tree(task, j.at("n_features").get<std::size_t>(), std::move(nodes));
}

// ---------------------------------------------------------------------------

Tree fit_tree(const Matrix& x, std::span<const double> targets, std::span<const std::size_t> rows,
              std::span<const std::size_t> allowed_features, const TreeParams& params) {
  validate(params);
  if (rows.empty()) throw DataError("cannot fit a tree on an empty training set");
  if (targets.size() != x.rows()) throw DataError("target count does not match row count");

  std::vector<std::size_t> allowed(allowed_features.begin(), allowed_features.end());
  if (allowed.empty()) {
    allowed.resize(x.cols());
    std::iota(allowed.begin(), allowed.end(), std::size_t{0});
  }
  std::sort(allowed.begin(), allowed.end());
  const std::size_t per_split =
      params.features_per_split == 0 ? allowed.size() : std::min(params.features_per_split, allowed.size());
  const std::size_t min_leaf = leaf_floor(rows.size(), params.min_leaf_fraction, params.min_leaf_rows);

  Rng rng(params.seed);
  std::vector<std::size_t> work(rows.begin(), rows.end());
  std::vector<Node> nodes;

  auto leaf_value = [&](std::span<const std::size_t> node_rows) {
    double sum = 0.0;
    for (std::size_t r : node_rows) sum += params.task == Task::kClassification ? (targets[r] > 0.0) : targets[r];
    return sum / static_cast<double>(node_rows.size());
  };
  auto is_pure = [&](std::span<const std::size_t> node_rows) {
    const double first = targets[node_rows.front()];
    return std::all_of(node_rows.begin(), node_rows.end(), [&](std::size_t r) {
      return params.task == Task::kClassification ? ((targets[r] > 0.0) == (first > 0.0)) : targets[r] == first;
    });
  };

  struct Pending {
    std::size_t node;
    std::size_t begin;
    std::size_t end;
  };
  nodes.push_back({});
  std::vector<Pending> stack{{0, 0, work.size()}};
  std::vector<std::size_t> candidates;
  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    std::span<std::size_t> node_rows(work.data() + job.begin, job.end - job.begin);
    nodes[job.node].n_rows = static_cast<std::uint32_t>(node_rows.size());
    nodes[job.node].value = leaf_value(node_rows);

    if (node_rows.size() < 2 * min_leaf || is_pure(node_rows)) continue;

    if (per_split == allowed.size()) {
      candidates = allowed;
    } else {
      candidates.clear();
      for (std::size_t i : rng.sample_without_replacement(allowed.size(), per_split)) candidates.push_back(allowed[i]);
    }
    SplitProblem problem{&x, targets, node_rows, params.task, min_leaf};
    auto split = best_split(problem, candidates, params.execution);
    if (!split) continue;

    auto middle = std::stable_partition(node_rows.begin(), node_rows.end(),
                                        [&](std::size_t r) { return x(r, split->feature) < split->threshold; });
    const std::size_t mid = job.begin + static_cast<std::size_t>(middle - node_rows.begin());

    const auto left = static_cast<std::int32_t>(nodes.size());
    nodes.push_back({});
    const auto right = static_cast<std::int32_t>(nodes.size());
    nodes.push_back({});
    Node& parent = nodes[job.node];
    parent.feature = static_cast<std::int32_t>(split->feature);
    parent.threshold = split->threshold;
    parent.left = left;
    parent.right = right;
    parent.impurity_decrease = split->impurity_decrease;
    // Right first so the left subtree is grown first.
    stack.push_back({static_cast<std::size_t>(right), mid, job.end});
    stack.push_back({static_cast<std::size_t>(left), job.begin, mid});
  }
  return Tree(params.task, x.cols(), std::move(nodes));
}

Tree fit_classification_tree(const Matrix& x, std::span<const int> labels, const TreeParams& params) {
  if (labels.size() != x.rows()) throw DataError("label count does not match row count");
  if (labels.empty()) throw DataError("cannot fit a tree on an empty training set");
  std::vector<double> targets(labels.begin(), labels.end());
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TreeParams p = params;
  p.task = Task::kClassification;
  return fit_tree(x, targets, rows, {}, p);
}

Tree fit_regression_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params) {
  if (targets.size() != x.rows()) throw DataError("target count does not match row count");
  if (targets.empty()) throw DataError("cannot fit a tree on an empty training set");
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TreeParams p = params;
  p.task = Task::kRegression;
  return fit_tree(x, targets, rows, {}, p);
}

}  // namespace redrisk::trees
