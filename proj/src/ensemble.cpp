#include "redrisk/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "redrisk/error.hpp"
#include "redrisk/random.hpp"

namespace redrisk::ensemble {

using nlohmann::json;

namespace {

void require_both_classes(std::span<const int> y) {
  bool pos = false;
  bool neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw DataError("labels must be +1 or -1");
    (v > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("training labels contain a single class; classification is undefined");
}

void check_arity(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw ConfigError("model expects " + std::to_string(expected) + " features, got " + std::to_string(got));
  }
}

json forest_params_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees},
          {"features_per_split", p.features_per_split},
          {"min_leaf_fraction", p.min_leaf_fraction},
          {"min_leaf_rows", p.min_leaf_rows},
          {"bootstrap", p.bootstrap},
          {"seed", p.seed}};
}

json gbm_params_json(const GbmParams& p) {
  return {{"n_learners", p.n_learners},         {"rho", p.rho},
          {"learner_features", p.learner_features}, {"split_features", p.split_features},
          {"lr_start", p.lr_start},             {"lr_cap", p.lr_cap},
          {"min_leaf_fraction", p.min_leaf_fraction}, {"min_leaf_rows", p.min_leaf_rows},
          {"seed", p.seed}};
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t default_features_per_split(std::size_t p) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
}

Forest fit_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params) {
  if (params.n_trees < 1) throw ConfigError("rf n_trees must be at least 1");
  if (y.size() != x.rows()) throw DataError("label count does not match row count");
  require_both_classes(y);

  Forest forest;
  forest.params = params;
  forest.n_features = x.cols();
  forest.trees.resize(params.n_trees);
  const std::vector<double> targets(y.begin(), y.end());
  const std::size_t n = x.rows();
  const std::size_t per_split =
      params.features_per_split == 0 ? default_features_per_split(x.cols()) : params.features_per_split;

  auto grow = [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, t);
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      Rng rng(derive_seed(tree_seed, 0xB007ULL));
      for (auto& r : rows) r = rng.below(n);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees::TreeParams tp;
    tp.task = trees::Task::kClassification;
    tp.min_leaf_fraction = params.min_leaf_fraction;
    tp.min_leaf_rows = params.min_leaf_rows;
    tp.features_per_split = per_split;
    tp.seed = tree_seed;
    tp.execution = Execution::kSerial;
    forest.trees[t] = trees::fit_tree(x, targets, rows, {}, tp);
  };

  const auto count = static_cast<std::ptrdiff_t>(params.n_trees);
  if (params.execution == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < count; ++t) grow(static_cast<std::size_t>(t));
  } else {
    for (std::ptrdiff_t t = 0; t < count; ++t) grow(static_cast<std::size_t>(t));
  }
  return forest;
}

ScoredLabel forest_decision(double score) { return {score, score >= 0.5 ? 1 : -1}; }

ScoredLabel predict_forest(const Forest& forest, std::span<const double> x) {
  check_arity(forest.n_features, x.size());
  double sum = 0.0;
  for (const auto& tree : forest.trees) sum += tree.predict(x);
  return forest_decision(sum / static_cast<double>(forest.trees.size()));
}

json Forest::to_json() const {
  json trees_json = json::array();
  for (const auto& t : trees) trees_json.push_back(t.to_json());
  return {{"params", forest_params_json(params)}, {"n_features", n_features}, {"trees", std::move(trees_json)}};
}

Forest Forest::from_json(const json& j) {
  Forest f;
  const auto& p = j.at("params");
  f.params.n_trees = p.at("n_trees").get<std::size_t>();
  f.params.features_per_split = p.at("features_per_split").get<std::size_t>();
  f.params.min_leaf_fraction = p.at("min_leaf_fraction").get<double>();
  f.params.min_leaf_rows = p.at("min_leaf_rows").get<std::size_t>();
  f.params.bootstrap = p.at("bootstrap").get<bool>();
  f.params.seed = p.at("seed").get<std::uint64_t>();
  f.n_features = j.at("n_features").get<std::size_t>();
  for (const auto& t : j.at("trees")) f.trees.push_back(trees::Tree::from_json(t));
  if (f.trees.empty()) throw DataError("forest entry has no trees");
  return f;
}

// ---------------------------------------------------------------------------

void validate(const GbmParams& p) {
  if (p.n_learners < 1) throw ConfigError("gbm n_learners must be at least 1");
  if (!(p.rho > 0.0 && p.rho < 1.0)) throw ConfigError("gbm rho must lie in (0,1)");
  if (!(p.lr_start > 0.0 && p.lr_start < p.lr_cap)) throw ConfigError("gbm requires 0 < lr_start < lr_cap");
  if (!(p.min_leaf_fraction > 0.0 && p.min_leaf_fraction <= 0.5)) {
    throw ConfigError("gbm min_leaf_fraction must lie in (0, 0.5]");
  }
}

std::size_t default_learner_features(std::size_t p, std::size_t n) {
  const auto by_p = p / 3;
  const auto by_n = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  return std::max<std::size_t>(1, std::min(by_p, by_n));
}

std::size_t default_split_features(std::size_t learner_features) {
  return std::max<std::size_t>(1, learner_features / 3);
}

double log_loss(int y, double f) {
  const double m = -static_cast<double>(y) * f;
  return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

double mean_log_loss(std::span<const int> y, std::span<const double> f) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += log_loss(y[i], f[i]);
  return y.empty() ? 0.0 : total / static_cast<double>(y.size());
}

std::vector<double> gbm_pseudo_residuals(std::span<const int> y, std::span<const double> f) {
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = static_cast<double>(y[i]);
    const double m = yi * f[i];
    if (m > 0.0) {
      const double e = std::exp(-m);
      r[i] = yi * e / (1.0 + e);
    } else {
      r[i] = yi / (1.0 + std::exp(m));
    }
  }
  return r;
}

double line_search_step(std::span<const double> tree_outputs, std::span<const int> y,
                        std::span<const double> current_f, double lr_start, double lr_cap) {
  auto loss_at = [&](double lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += log_loss(y[i], current_f[i] + lambda * tree_outputs[i]);
    return total;
  };
  double best = lr_start;
  double previous = loss_at(lr_start);
  double lambda = lr_start;
  while (lambda < lr_cap) {
    lambda = std::min(2.0 * lambda, lr_cap);
    const double loss = loss_at(lambda);
    if (!(loss < previous)) break;
    best = lambda;
    previous = loss;
  }
  return best;
}

GbmModel fit_gbm(const Matrix& x, std::span<const int> y, const GbmParams& params, GbmTrace* trace) {
  validate(params);
  if (y.size() != x.rows()) throw DataError("label count does not match row count");
  require_both_classes(y);

  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  const auto positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double negatives = static_cast<double>(n) - positives;

  GbmModel model;
  model.params = params;
  model.n_features = p;
  model.intercept = std::log(positives / negatives);

  const std::size_t subsample =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params.rho * static_cast<double>(n))));
  const std::size_t m = params.learner_features == 0 ? default_learner_features(p, n)
                                                     : std::min(params.learner_features, p);
  const std::size_t per_split = params.split_features == 0 ? default_split_features(m)
                                                           : std::min(params.split_features, m);

  std::vector<double> f(n, model.intercept);
  std::vector<double> candidate(n);
  std::vector<double> h_full(n);
  double current_loss = mean_log_loss(y, f);
  if (trace) {
    *trace = GbmTrace{};
    trace->initial_loss = current_loss;
  }

  Rng rng(derive_seed(params.seed, 0x6B3ULL));
  std::vector<int> y_sub(subsample);
  std::vector<double> f_sub(subsample);
  std::vector<double> h_sub(subsample);

  for (std::size_t t = 0; t < params.n_learners; ++t) {
    auto rows = rng.sample_without_replacement(n, subsample);
    std::sort(rows.begin(), rows.end());
    auto features = rng.sample_without_replacement(p, m);
    std::sort(features.begin(), features.end());

    const auto residuals = gbm_pseudo_residuals(y, f);
    trees::TreeParams tp;
    tp.task = trees::Task::kRegression;
    tp.min_leaf_fraction = params.min_leaf_fraction;
    tp.min_leaf_rows = params.min_leaf_rows;
    tp.features_per_split = per_split;
    tp.seed = derive_seed(params.seed, t + 1);
    tp.execution = params.execution;
    trees::Tree tree = trees::fit_tree(x, residuals, rows, features, tp);

    for (std::size_t i = 0; i < subsample; ++i) {
      y_sub[i] = y[rows[i]];
      f_sub[i] = f[rows[i]];
      h_sub[i] = tree.predict(x.row(rows[i]));
    }
    const double step = line_search_step(h_sub, y_sub, f_sub, params.lr_start, params.lr_cap);

    for (std::size_t i = 0; i < n; ++i) {
      h_full[i] = tree.predict(x.row(i));
      candidate[i] = f[i] + step * h_full[i];
    }
    const double loss = mean_log_loss(y, candidate);
    const bool accept = loss <= current_loss;
    if (accept) {
      f.swap(candidate);
      current_loss = loss;
      model.steps.push_back({step, std::move(tree), std::move(features)});
    }
    if (trace) {
      double margin = 0.0;
      for (double v : f) margin += std::abs(v);
      trace->train_loss.push_back(current_loss);
      trace->step.push_back(step);
      trace->accepted.push_back(accept);
      trace->mean_abs_margin.push_back(margin / static_cast<double>(n));
    }
  }
  return model;
}

ScoredLabel predict_gbm(const GbmModel& model, std::span<const double> x) {
  check_arity(model.n_features, x.size());
  double f = model.intercept;
  for (const auto& s : model.steps) f += s.step * s.tree.predict(x);
  return {f, f >= 0.0 ? 1 : -1};
}

json GbmModel::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"step", s.step}, {"features", s.features}, {"tree", s.tree.to_json()}});
  }
  return {{"params", gbm_params_json(params)},
          {"n_features", n_features},
          {"intercept", intercept},
          {"steps", std::move(steps_json)}};
}

GbmModel GbmModel::from_json(const json& j) {
  GbmModel m;
  const auto& p = j.at("params");
  m.params.n_learners = p.at("n_learners").get<std::size_t>();
  m.params.rho = p.at("rho").get<double>();
  m.params.learner_features = p.at("learner_features").get<std::size_t>();
  m.params.split_features = p.at("split_features").get<std::size_t>();
  m.params.lr_start = p.at("lr_start").get<double>();
  m.params.lr_cap = p.at("lr_cap").get<double>();
  m.params.min_leaf_fraction = p.at("min_leaf_fraction").get<double>();
  m.params.min_leaf_rows = p.at("min_leaf_rows").get<std::size_t>();
  m.params.seed = p.at("seed").get<std::uint64_t>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.intercept = j.at("intercept").get<double>();
  for (const auto& s : j.at("steps")) {
    m.steps.push_back({s.at("step").get<double>(), trees::Tree::from_json(s.at("tree")),
                       s.at("features").get<std::vector<std::size_t>>()});
  }
  return m;
}

}  // namespace redrisk::ensemble
