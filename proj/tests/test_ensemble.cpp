#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "redrisk/ensemble.hpp"
#include "redrisk/error.hpp"
#include "redrisk/experiment.hpp"
#include "support.hpp"

using namespace redrisk;
using namespace redrisk::ensemble;

namespace {

struct Data {
  Matrix x;
  std::vector<int> y;
};

Data nonlinear_data(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Data d{testsupport::normal_matrix(n, p, rng), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (d.x(i, 0) > 0) != (d.x(i, 1) > 0) ? 1.0 : -1.0;
    d.y[i] = z + 0.8 * d.x(i, 2) + rng.normal() > 0 ? 1 : -1;
  }
  return d;
}

trees::Tree constant_tree(std::size_t n_features, double value) {
  return trees::Tree(trees::Task::kRegression, n_features, {trees::Node{-1, 0.0, -1, -1, value, 1, 0.0}});
}

}  // namespace

TEST_CASE("default subset sizes") {
  CHECK(default_features_per_split(109) == 10);
  CHECK(default_features_per_split(1) == 1);
  CHECK(default_learner_features(134, 10000) == 44);
  CHECK(default_split_features(44) == 14);
  CHECK(default_learner_features(2, 4) == 1);
}

TEST_CASE("a one-tree forest without bootstrap is a CART tree") {
  const auto d = nonlinear_data(400, 5, 1);
  ForestParams fp;
  fp.n_trees = 1;
  fp.bootstrap = false;
  fp.features_per_split = 5;
  fp.min_leaf_rows = 1;
  const auto forest = fit_random_forest(d.x, d.y, fp);
  trees::TreeParams tp;
  tp.min_leaf_fraction = fp.min_leaf_fraction;
  tp.min_leaf_rows = fp.min_leaf_rows;
  const auto tree = trees::fit_classification_tree(d.x, d.y, tp);
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    CHECK(predict_forest(forest, d.x.row(i)).score == tree.predict(d.x.row(i)));
  }
}

TEST_CASE("forest vote conventions") {
  Forest f;
  f.n_features = 1;
  f.trees = {trees::Tree(trees::Task::kClassification, 1, {trees::Node{-1, 0, -1, -1, 1.0, 1, 0}}),
             trees::Tree(trees::Task::kClassification, 1, {trees::Node{-1, 0, -1, -1, 1.0, 1, 0}})};
  const std::vector<double> x{0.0};
  CHECK(predict_forest(f, x).score == 1.0);
  CHECK(predict_forest(f, x).label == 1);

  f.trees = {trees::Tree(trees::Task::kClassification, 1, {trees::Node{-1, 0, -1, -1, 0.2, 1, 0}}),
             trees::Tree(trees::Task::kClassification, 1, {trees::Node{-1, 0, -1, -1, 0.4, 1, 0}})};
  CHECK(predict_forest(f, x).score == doctest::Approx(0.3));
  CHECK(predict_forest(f, x).label == -1);
  CHECK(forest_decision(0.5).label == 1);
  CHECK(forest_decision(std::nextafter(0.5, 0.0)).label == -1);
}

TEST_CASE("forests are deterministic and thread-count independent") {
  const auto d = nonlinear_data(600, 8, 2);
  ForestParams p;
  p.seed = 9;
  const auto a = fit_random_forest(d.x, d.y, p);
  const auto b = fit_random_forest(d.x, d.y, p);
  p.execution = Execution::kSerial;
  const auto c = fit_random_forest(d.x, d.y, p);
  CHECK(a.trees == b.trees);
  CHECK(a.trees == c.trees);
  const auto back = Forest::from_json(a.to_json());
  CHECK(back.trees == a.trees);
}

TEST_CASE("forests need both classes") {
  Matrix x(3, 1);
  const std::vector<int> y{1, 1, 1};
  CHECK_THROWS_AS(fit_random_forest(x, y, ForestParams{}), DataError);
  CHECK_THROWS_AS(fit_gbm(x, y, GbmParams{}), DataError);
}

TEST_CASE("pseudo-residuals") {
  const std::vector<int> y{1, -1, 1};
  const std::vector<double> f{0.0, 0.0, 20.0};
  const auto r = gbm_pseudo_residuals(y, f);
  CHECK(r[0] == 0.5);
  CHECK(r[1] == -0.5);
  CHECK(r[2] == doctest::Approx(1.0 / (1.0 + std::exp(20.0))).epsilon(1e-12));
  CHECK(r[2] == doctest::Approx(2.06e-9).epsilon(0.01));

  const std::vector<int> yy{1, -1};
  const std::vector<double> extreme{-800.0, -800.0};
  const auto re = gbm_pseudo_residuals(yy, extreme);
  CHECK(std::isfinite(re[0]));
  CHECK(re[0] == doctest::Approx(1.0));
  CHECK(std::abs(re[1]) < 1e-300);
}

TEST_CASE("pseudo-residuals are the negative loss derivative") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const int y = rng.bernoulli(0.5) ? 1 : -1;
    const double f = rng.uniform(-8.0, 8.0);
    const double h = 1e-5;
    const double fd = -(log_loss(y, f + h) - log_loss(y, f - h)) / (2 * h);
    const std::vector<int> ys{y};
    const std::vector<double> fs{f};
    const double r = gbm_pseudo_residuals(ys, fs)[0];
    CHECK(std::abs(r - fd) <= 1e-6 * std::max(1.0, std::abs(r)));
  }
}

TEST_CASE("log loss is stable at extreme margins") {
  CHECK(log_loss(1, 100.0) < 1e-40);
  CHECK(log_loss(-1, 100.0) == doctest::Approx(100.0));
  CHECK(std::isfinite(log_loss(1, -1e6)));
}

TEST_CASE("line search on a null learner returns the starting rate") {
  const std::vector<double> h(4, 0.0);
  const std::vector<int> y{1, -1, 1, -1};
  const std::vector<double> f(4, 0.0);
  CHECK(line_search_step(h, y, f, 0.001, 0.1) == 0.001);
}

TEST_CASE("line search on separable data climbs to the cap") {
  const std::vector<int> y{-1, -1, 1, 1};
  const std::vector<double> f(4, 0.0);
  const auto r = gbm_pseudo_residuals(y, f);
  const std::vector<double> h(r.begin(), r.end());
  double lambda = 0.001;
  double prev = mean_log_loss(y, f);
  std::vector<double> trial(4);
  while (true) {
    for (std::size_t i = 0; i < 4; ++i) trial[i] = f[i] + lambda * h[i];
    const double loss = mean_log_loss(y, trial);
    CHECK(loss < prev);
    prev = loss;
    if (lambda >= 0.1) break;
    lambda = std::min(0.1, 2 * lambda);
  }
  CHECK(line_search_step(h, y, f, 0.001, 0.1) == 0.1);
}

TEST_CASE("a wrong-signed learner gets the starting rate and would raise the loss") {
  const std::vector<int> y{-1, -1, 1, 1};
  const std::vector<double> f(4, 0.0);
  const std::vector<double> h{1.0, 1.0, -1.0, -1.0};
  const double lambda = line_search_step(h, y, f, 0.001, 0.1);
  CHECK(lambda == 0.001);
  std::vector<double> moved(4);
  for (std::size_t i = 0; i < 4; ++i) moved[i] = f[i] + lambda * h[i];
  CHECK(mean_log_loss(y, moved) > mean_log_loss(y, f));
}

TEST_CASE("two balanced rows and one round") {
  Matrix x(2, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  const std::vector<int> y{-1, 1};
  GbmParams p;
  p.n_learners = 1;
  p.min_leaf_rows = 1;
  GbmTrace trace;
  const auto model = fit_gbm(x, y, p, &trace);
  CHECK(model.intercept == 0.0);
  CHECK(trace.step.size() == 1);
  CHECK(model.steps.size() <= 1);
  CHECK(trace.train_loss.back() <= trace.initial_loss);
}

TEST_CASE("gbm prediction arithmetic") {
  GbmModel m;
  m.n_features = 1;
  const std::vector<double> x{3.0};
  CHECK(predict_gbm(m, x).score == 0.0);
  CHECK(predict_gbm(m, x).label == 1);
  m.intercept = -0.1;
  m.steps.push_back({0.1, constant_tree(1, 2.0), {0}});
  CHECK(predict_gbm(m, x).score == doctest::Approx(0.1));
  CHECK(predict_gbm(m, x).label == 1);
}

TEST_CASE("accepted boosting rounds never raise the training loss") {
  const auto d = nonlinear_data(1500, 20, 3);
  GbmParams p;
  p.n_learners = 200;
  GbmTrace trace;
  const auto model = fit_gbm(d.x, d.y, p, &trace);
  double prev = trace.initial_loss;
  for (std::size_t t = 0; t < trace.train_loss.size(); ++t) {
    CHECK(trace.train_loss[t] <= prev);
    prev = trace.train_loss[t];
  }
  std::vector<double> f(d.x.rows());
  for (std::size_t i = 0; i < d.x.rows(); ++i) f[i] = predict_gbm(model, d.x.row(i)).score;
  CHECK(mean_log_loss(d.y, f) == doctest::Approx(trace.train_loss.back()).epsilon(1e-12));
  for (const auto& s : model.steps) {
    CHECK(s.step <= 0.1);
    CHECK(s.step > 0.0);
  }
}

TEST_CASE("margins grow on separable data") {
  // Balanced classes so that F0 = 0.
  Rng rng(4);
  auto x = testsupport::normal_matrix(400, 3, rng);
  std::vector<int> y(400);
  for (std::size_t i = 0; i < 400; ++i) {
    y[i] = i < 200 ? 1 : -1;
    x(i, 0) = y[i] * (0.5 + rng.uniform());
  }
  GbmParams p;
  p.n_learners = 60;
  GbmTrace trace;
  fit_gbm(x, y, p, &trace);
  for (std::size_t t = 1; t < trace.mean_abs_margin.size(); ++t) {
    CHECK(trace.mean_abs_margin[t] >= trace.mean_abs_margin[t - 1]);
  }
  CHECK(trace.train_loss.back() < 0.5 * trace.initial_loss);
}

TEST_CASE("gbm is deterministic and survives JSON") {
  const auto d = nonlinear_data(500, 6, 7);
  GbmParams p;
  p.n_learners = 30;
  const auto a = fit_gbm(d.x, d.y, p);
  p.execution = Execution::kSerial;
  const auto b = fit_gbm(d.x, d.y, p);
  const auto back = GbmModel::from_json(a.to_json());
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    const double s = predict_gbm(a, d.x.row(i)).score;
    CHECK(s == predict_gbm(b, d.x.row(i)).score);
    CHECK(s == predict_gbm(back, d.x.row(i)).score);
  }
}

TEST_CASE("invalid gbm parameters") {
  GbmParams p;
  p.rho = 1.0;
  CHECK_THROWS_AS(validate(p), ConfigError);
  p = GbmParams{};
  p.lr_start = 0.2;
  CHECK_THROWS_AS(validate(p), ConfigError);
}

TEST_CASE("a forest beats a single tree on planted signal") {
  eval::ExperimentConfig c;
  c.synthetic.n_patients = 1500;
  c.synthetic.redundancy_factor = 5;
  c.feature_sets = {featurize::FeatureSet::kFs2};
  c.horizons = {180};
  c.models = {eval::ModelKind::kCart, eval::ModelKind::kForest};
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto result = eval::run_experiment(c);
  std::map<std::uint64_t, std::map<std::string, double>> auc;
  for (const auto& row : result.rows) auc[row.seed][row.model] = row.auc;
  int wins = 0;
  for (auto& [seed, m] : auc) wins += m.at("rf") >= m.at("cart");
  CHECK(wins >= 9);
}
