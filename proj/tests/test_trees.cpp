#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "redrisk/error.hpp"
#include "redrisk/trees.hpp"
#include "support.hpp"

using namespace redrisk;
using namespace redrisk::trees;

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}


// Exhaustive enumeration of every (feature, midpoint) with direct Gini counts.
struct Enumerated {
  double best = -1.0;
  std::vector<std::pair<std::size_t, double>> argmax;
};

Enumerated enumerate_splits(const Matrix& x, std::span<const double> y, std::size_t min_leaf) {
  const std::size_t n = x.rows();
  auto gini_of = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    double pos = 0;
    for (auto i : idx) pos += y[i] > 0;
    const double p = pos / static_cast<double>(idx.size());
    return 1.0 - p * p - (1 - p) * (1 - p);
  };
  const double parent = gini_of(iota_rows(n));
  Enumerated out;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::set<double> values;
    for (std::size_t i = 0; i < n; ++i) values.insert(x(i, f));
    std::vector<double> v(values.begin(), values.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double t = 0.5 * (v[k] + v[k + 1]);
      std::vector<std::size_t> l, r;
      for (std::size_t i = 0; i < n; ++i) (x(i, f) < t ? l : r).push_back(i);
      if (l.size() < min_leaf || r.size() < min_leaf) continue;
      const double child = (static_cast<double>(l.size()) * gini_of(l) + static_cast<double>(r.size()) * gini_of(r)) /
                           static_cast<double>(n);
      const double gain = parent - child;
      if (gain > out.best + 1e-12) {
        out.best = gain;
        out.argmax = {{f, t}};
      } else if (std::abs(gain - out.best) <= 1e-12) {
        out.argmax.push_back({f, t});
      }
    }
  }
  return out;
}

std::size_t training_errors(const Tree& tree, const Matrix& x, std::span<const int> y) {
  std::size_t errors = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) errors += (tree.predict(x.row(i)) >= 0.5 ? 1 : -1) != y[i];
  return errors;
}

TreeParams unpruned() {
  TreeParams p;
  p.min_leaf_fraction = 1e-9;
  p.min_leaf_rows = 1;
  return p;
}

}  // namespace

TEST_CASE("pure rows have no split") {
  Matrix x(4, 1);
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = static_cast<double>(i);
  const std::vector<double> y(4, 1.0);
  const auto rows = iota_rows(4);
  const std::vector<std::size_t> features{0};
  CHECK_FALSE(best_split({&x, y, rows, Task::kClassification, 1}, features).has_value());
}

TEST_CASE("one-dimensional separable split") {
  Matrix x(4, 1);
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = static_cast<double>(i);
  const std::vector<double> y{-1, -1, 1, 1};
  const auto rows = iota_rows(4);
  const std::vector<std::size_t> features{0};
  const auto split = best_split({&x, y, rows, Task::kClassification, 1}, features);
  REQUIRE(split.has_value());
  CHECK(split->threshold > 1.0);
  CHECK(split->threshold < 2.0);
  CHECK(split->impurity_decrease == doctest::Approx(0.5));
  const auto oracle = enumerate_splits(x, y, 1);
  CHECK(oracle.best == doctest::Approx(0.5));
  CHECK(oracle.argmax.size() == 1);
}

TEST_CASE("best split matches exhaustive enumeration on random data") {
  Rng rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 5 + rng.below(30);
    const std::size_t p = 1 + rng.below(4);
    Matrix x(n, p);
    for (auto& v : x.data()) v = static_cast<double>(rng.below(6));
    std::vector<double> y(n);
    for (auto& v : y) v = rng.bernoulli(0.4) ? 1.0 : -1.0;
    const std::size_t min_leaf = 1 + rng.below(3);
    const auto rows = iota_rows(n);
    const auto features = iota_rows(p);
    const auto split = best_split_reference({&x, y, rows, Task::kClassification, min_leaf}, features);
    const auto oracle = enumerate_splits(x, y, min_leaf);
    if (oracle.best > 1e-12) {
      REQUIRE(split.has_value());
      CHECK(split->impurity_decrease == doctest::Approx(oracle.best).epsilon(1e-12));
      CHECK(std::find(oracle.argmax.begin(), oracle.argmax.end(), std::pair{split->feature, split->threshold}) !=
            oracle.argmax.end());
    } else if (split) {
      CHECK(split->impurity_decrease == 0.0);
    }
  }
}

TEST_CASE("parallel and serial split search agree") {
  Rng rng(4);
  const auto x = testsupport::normal_matrix(3000, 20, rng);
  std::vector<double> y(3000);
  for (std::size_t i = 0; i < 3000; ++i) y[i] = x(i, 3) + 0.5 * rng.normal() > 0 ? 1.0 : -1.0;
  const auto rows = iota_rows(3000);
  const auto features = iota_rows(20);
  const SplitProblem problem{&x, y, rows, Task::kClassification, 10};
  const auto a = best_split(problem, features, Execution::kParallel);
  const auto b = best_split_reference(problem, features);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->feature == b->feature);
  CHECK(a->threshold == b->threshold);
  CHECK(a->impurity_decrease == b->impurity_decrease);
  CHECK(a->feature == 3);
}

TEST_CASE("the informative feature beats a noise column") {
  int informative = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    Matrix x(200, 2);
    std::vector<double> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      x(i, 0) = rng.normal();
      x(i, 1) = rng.normal();
      y[i] = x(i, 1) + rng.normal() > 0 ? 1.0 : -1.0;
    }
    const auto rows = iota_rows(200);
    const std::vector<std::size_t> features{0, 1};
    const auto split = best_split({&x, y, rows, Task::kClassification, 1}, features);
    informative += split && split->feature == 1;
  }
  CHECK(informative >= 95);
}

TEST_CASE("single row gives a single leaf") {
  Matrix x(1, 2);
  x(0, 0) = 3.0;
  const std::vector<int> y{1};
  const auto tree = fit_classification_tree(x, y, unpruned());
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.predict(x.row(0)) == 1.0);
  const std::vector<double> target{4.5};
  CHECK(fit_regression_tree(x, target, unpruned()).predict(x.row(0)) == 4.5);
}

TEST_CASE("XOR is fit exactly with four leaves") {
  Matrix x(4, 2);
  const double pts[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    x(i, 0) = pts[i][0];
    x(i, 1) = pts[i][1];
  }
  const std::vector<int> y{-1, 1, 1, -1};
  const auto tree = fit_classification_tree(x, y, unpruned());
  CHECK(tree.leaf_count() == 4);
  CHECK(training_errors(tree, x, y) == 0);
}

TEST_CASE("leaf floor is enforced") {
  Rng rng(2);
  const auto x = testsupport::normal_matrix(128, 3, rng);
  std::vector<int> y(128);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : -1;
  TreeParams p;
  p.min_leaf_fraction = 1.0 / 64.0;
  CHECK(leaf_floor(128, p.min_leaf_fraction, p.min_leaf_rows) == 2);
  const auto tree = fit_classification_tree(x, y, p);
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) CHECK(node.n_rows >= 2);
  }
}

TEST_CASE("prediction conventions") {
  const Tree leaf(Task::kClassification, 2, {Node{-1, 0.0, -1, -1, 0.25, 5, 0.0}});
  const std::vector<double> a{1.0, -7.0};
  CHECK(leaf.predict(a) == 0.25);

  const Tree stump(Task::kClassification, 1,
                   {Node{0, 1.5, 1, 2, 0.5, 4, 0.5}, Node{-1, 0, -1, -1, 0.0, 2, 0}, Node{-1, 0, -1, -1, 1.0, 2, 0}});
  const std::vector<double> at{1.5};
  CHECK(stump.predict(at) == 1.0);
  const std::vector<double> below{1.4999};
  CHECK(stump.predict(below) == 0.0);
  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(stump.predict(wrong), ConfigError);
}

TEST_CASE("unpruned trees memorize conflict-free data") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 60;
    Matrix x(n, 3);
    for (auto& v : x.data()) v = static_cast<double>(rng.below(1000));
    std::vector<int> y(n);
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : -1;
    const auto tree = fit_classification_tree(x, y, unpruned());
    CHECK(training_errors(tree, x, y) == 0);
    for (const auto& node : tree.nodes()) {
      if (!node.is_leaf()) CHECK(node.impurity_decrease >= 0.0);
    }
  }
}

TEST_CASE("internal nodes have positive decrease on smooth data") {
  Rng rng(6);
  const auto x = testsupport::normal_matrix(500, 4, rng);
  std::vector<int> y(500);
  for (std::size_t i = 0; i < 500; ++i) y[i] = x(i, 0) * x(i, 1) + 0.3 * rng.normal() > 0 ? 1 : -1;
  TreeParams p;
  const auto tree = fit_classification_tree(x, y, p);
  CHECK(tree.leaf_count() > 1);
  for (const auto& node : tree.nodes()) {
    if (!node.is_leaf()) CHECK(node.impurity_decrease > 0.0);
  }
}

TEST_CASE("predictions are invariant to a monotone column transform") {
  Rng rng(9);
  auto x = testsupport::normal_matrix(300, 3, rng);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = x(i, 0) + x(i, 2) + rng.normal() > 0 ? 1 : -1;
  TreeParams p;
  p.seed = 3;
  p.features_per_split = 2;
  const auto tree = fit_classification_tree(x, y, p);
  auto transformed = x;
  for (std::size_t i = 0; i < 300; ++i) transformed(i, 2) = std::exp(3.0 * x(i, 2)) - 1.0;
  const auto tree2 = fit_classification_tree(transformed, y, p);
  for (std::size_t i = 0; i < 300; ++i) CHECK(tree.predict(x.row(i)) == tree2.predict(transformed.row(i)));
}

TEST_CASE("regression trees average targets in leaves") {
  Matrix x(6, 1);
  std::vector<double> t{1, 1, 1, 5, 5, 5};
  for (std::size_t i = 0; i < 6; ++i) x(i, 0) = static_cast<double>(i);
  auto p = unpruned();
  p.task = Task::kRegression;
  p.min_leaf_rows = 3;
  const auto tree = fit_regression_tree(x, t, p);
  CHECK(tree.leaf_count() == 2);
  const std::vector<double> lo{0.0}, hi{5.0};
  CHECK(tree.predict(lo) == 1.0);
  CHECK(tree.predict(hi) == 5.0);
}

TEST_CASE("tree JSON round trip") {
  Rng rng(1);
  const auto x = testsupport::normal_matrix(200, 3, rng);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) y[i] = x(i, 1) > 0 ? 1 : -1;
  const auto tree = fit_classification_tree(x, y, TreeParams{});
  const auto back = Tree::from_json(tree.to_json());
  CHECK(back == tree);
}

TEST_CASE("invalid tree parameters") {
  TreeParams p;
  p.min_leaf_fraction = 0.6;
  CHECK_THROWS_AS(validate(p), ConfigError);
  p.min_leaf_fraction = 0.0;
  CHECK_THROWS_AS(validate(p), ConfigError);
}
