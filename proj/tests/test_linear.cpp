#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "redrisk/error.hpp"
#include "redrisk/linear.hpp"
#include "redrisk/random.hpp"
#include "support.hpp"

using namespace redrisk;
using namespace redrisk::linear;

namespace {

struct Problem {
  Matrix x;
  std::vector<int> y;
};

// Logistic outcome driven by the first entries of `w`; remaining columns are noise.
Problem logistic_problem(std::size_t n, std::size_t p, std::vector<double> w, double b, std::uint64_t seed) {
  Rng rng(seed);
  Problem pr{testsupport::normal_matrix(n, p, rng), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double m = b;
    for (std::size_t j = 0; j < w.size(); ++j) m += w[j] * pr.x(i, j);
    pr.y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-m)) ? 1 : -1;
  }
  return pr;
}

// Direct standardization and gradient of the mean logistic loss, written out long-hand.
struct Reference {
  std::vector<std::vector<double>> z;  // kept columns only
  std::vector<std::size_t> kept;
};

Reference standardize(const Matrix& x) {
  Reference r;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= n;
    double var = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(var / n);
    if (sd < 1e-12) continue;
    std::vector<double> col(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) col[i] = (x(i, j) - mean) / sd;
    r.z.push_back(std::move(col));
    r.kept.push_back(j);
  }
  return r;
}

std::vector<double> margins(const Reference& r, const LassoModel& m, std::size_t n) {
  std::vector<double> eta(n, m.intercept);
  for (std::size_t k = 0; k < r.kept.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) eta[i] += m.weights[r.kept[k]] * r.z[k][i];
  return eta;
}

std::vector<double> gradient(const Reference& r, const LassoModel& m, std::span<const int> y) {
  const auto eta = margins(r, m, y.size());
  std::vector<double> g(r.kept.size(), 0.0);
  for (std::size_t k = 0; k < r.kept.size(); ++k) {
    for (std::size_t i = 0; i < y.size(); ++i) g[k] += -y[i] * r.z[k][i] / (1.0 + std::exp(y[i] * eta[i]));
    g[k] /= static_cast<double>(y.size());
  }
  return g;
}

double objective(const Reference& r, const LassoModel& m, std::span<const int> y) {
  const auto eta = margins(r, m, y.size());
  double loss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += std::log1p(std::exp(-y[i] * eta[i]));
  double l1 = 0;
  for (double w : m.weights) l1 += std::abs(w);
  return loss / static_cast<double>(y.size()) + m.alpha * l1;
}

double kkt_reference(const Reference& r, const LassoModel& m, std::span<const int> y) {
  const auto g = gradient(r, m, y);
  double worst = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = m.weights[r.kept[k]];
    worst = std::max(worst, w == 0.0 ? std::max(0.0, std::abs(g[k]) - m.alpha)
                                     : std::abs(g[k] + m.alpha * (w > 0 ? 1.0 : -1.0)));
  }
  return worst;
}

double null_gradient_bound(const Matrix& x, std::span<const int> y) {
  const Reference r = standardize(x);
  double pos = 0;
  for (int v : y) pos += v > 0;
  const double p = pos / static_cast<double>(y.size());
  double best = 0;
  for (const auto& z : r.z) {
    double g = 0;
    for (std::size_t i = 0; i < y.size(); ++i) g += ((y[i] > 0 ? 1.0 : 0.0) - p) * z[i];
    best = std::max(best, std::abs(g) / static_cast<double>(y.size()));
  }
  return best;
}

}  // namespace

TEST_CASE("very large penalty gives zero weights and the base-rate intercept") {
  const auto pr = logistic_problem(300, 8, {1.0, -1.0}, -1.0, 3);
  const auto m = fit_lasso_logistic(pr.x, pr.y, 1e3);
  CHECK(m.nonzero_count() == 0);
  CHECK(m.zero_count() == 8);
  const double pos = static_cast<double>(std::count(pr.y.begin(), pr.y.end(), 1));
  const double neg = static_cast<double>(pr.y.size()) - pos;
  CHECK(m.intercept == doctest::Approx(std::log(pos / neg)).epsilon(1e-9));
  CHECK(m.converged);
}

TEST_CASE("unpenalized fit on separable data stops at the sweep cap with a warning") {
  Rng rng(11);
  Matrix x(60, 1);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    x(i, 0) = rng.uniform(-1, 1);
    y[i] = x(i, 0) > 0 ? 1 : -1;
  }
  LassoOptions opt;
  opt.max_sweeps = 40;
  const auto m = fit_lasso_logistic(x, y, 0.0, opt);
  CHECK_FALSE(m.converged);
  CHECK(m.sweeps == 40);
  REQUIRE_FALSE(m.warnings.empty());
  REQUIRE(m.objective_history.size() == 40);
  for (std::size_t k = 1; k < m.objective_history.size(); ++k)
    CHECK(m.objective_history[k] <= m.objective_history[k - 1] + 1e-15);
  CHECK(m.objective_history.back() < 0.5 * m.objective_history.front());
  CHECK(std::isfinite(m.weights[0]));
}

TEST_CASE("support recovery of three planted features out of fifty") {
  int recovered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pr = logistic_problem(400, 50, {1.5, -1.5, 1.0}, 0.0, 100 + seed);
    const double amax = alpha_max(pr.x, pr.y);
    const auto m = fit_lasso_logistic(pr.x, pr.y, amax / 4);
    recovered += m.weights[0] != 0 && m.weights[1] != 0 && m.weights[2] != 0;
  }
  CHECK(recovered >= 9);
}

TEST_CASE("alpha_max matches the null-gradient bound and zeroes the fit") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto pr = logistic_problem(250, 12, {0.8, 0.0, -0.6}, 0.3, seed);
    const double amax = alpha_max(pr.x, pr.y);
    CHECK(amax == doctest::Approx(null_gradient_bound(pr.x, pr.y)).epsilon(1e-8));
    CHECK(fit_lasso_logistic(pr.x, pr.y, amax).nonzero_count() == 0);
    CHECK(fit_lasso_logistic(pr.x, pr.y, 0.95 * amax).nonzero_count() > 0);
  }
}

TEST_CASE("default grid spans three decades in log steps") {
  const auto g = default_grid(2.0);
  REQUIRE(g.size() == 20);
  CHECK(g.front() == doctest::Approx(2.0));
  CHECK(g.back() == doctest::Approx(2e-3));
  for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] / g[k - 1] == doctest::Approx(std::pow(1e-3, 1.0 / 19)));
  CHECK(default_grid(2.0, 1) == std::vector<double>{2.0});
  CHECK_THROWS_AS(default_grid(2.0, 0), ConfigError);
}

TEST_CASE("tuning with a single grid value returns it") {
  const auto tr = logistic_problem(200, 6, {1.0}, 0.0, 5);
  const auto va = logistic_problem(100, 6, {1.0}, 0.0, 6);
  const auto res = tune_penalty(tr.x, tr.y, va.x, va.y, {0.01});
  CHECK(res.best_alpha == 0.01);
  CHECK(res.model.alpha == 0.01);
  CHECK(res.path.size() == 1);
}

TEST_CASE("equal validation F goes to the larger penalty") {
  // Both values zero every weight; with a minority positive class every
  // prediction is negative and both score F = 0.
  const auto tr = logistic_problem(200, 6, {1.0}, -1.5, 7);
  const auto va = logistic_problem(100, 6, {1.0}, -1.5, 8);
  const double amax = alpha_max(tr.x, tr.y);
  for (auto grid : {std::vector<double>{2 * amax, 3 * amax}, std::vector<double>{3 * amax, 2 * amax}}) {
    const auto res = tune_penalty(tr.x, tr.y, va.x, va.y, grid);
    CHECK(res.path[0].f_measure == res.path[1].f_measure);
    CHECK(res.best_alpha == 3 * amax);
  }
}

TEST_CASE("prediction arithmetic") {
  LassoModel m;
  m.standardizer.mean = {0.0};
  m.standardizer.scale = {1.0};
  m.standardizer.kept = {true};
  m.weights = {0.0};
  const double one = 1.0;
  auto pred = predict_logistic(m, std::span(&one, 1));
  CHECK(pred.probability == 0.5);
  CHECK(pred.label == 1);

  m.weights = {1.0};
  pred = predict_logistic(m, std::span(&one, 1));
  CHECK(pred.probability == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(pred.label == 1);

  const double far = -1e6;
  pred = predict_logistic(m, std::span(&far, 1));
  CHECK(pred.probability >= 0.0);
  CHECK(pred.probability < 1e-300);
  CHECK(pred.label == -1);

  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS(predict_logistic(m, two));
}

TEST_CASE("objective is non-increasing per sweep and matches a direct evaluation") {
  const auto pr = logistic_problem(300, 20, {1.0, -0.7, 0.5}, 0.2, 21);
  const double amax = alpha_max(pr.x, pr.y);
  for (double frac : {0.5, 0.1, 0.01}) {
    const auto m = fit_lasso_logistic(pr.x, pr.y, frac * amax);
    REQUIRE(m.converged);
    for (std::size_t k = 1; k < m.objective_history.size(); ++k)
      CHECK(m.objective_history[k] <= m.objective_history[k - 1] + 1e-15);
    CHECK(m.objective_history.back() == doctest::Approx(objective(standardize(pr.x), m, pr.y)).epsilon(1e-10));
  }
}

TEST_CASE("converged fits satisfy the subgradient conditions") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto pr = logistic_problem(250, 30, {1.2, -0.8, 0.6, 0.4}, -0.5, 40 + seed);
    const Reference ref = standardize(pr.x);
    for (double a : default_grid(alpha_max(pr.x, pr.y))) {
      const auto m = fit_lasso_logistic(pr.x, pr.y, a);
      REQUIRE(m.converged);
      const double own = kkt_violation(m, pr.x, pr.y);
      CHECK(own <= 1e-4);
      CHECK(kkt_reference(ref, m, pr.y) <= 1e-4);
      CHECK(own == doctest::Approx(kkt_reference(ref, m, pr.y)).epsilon(1e-6).scale(1e-9));
    }
  }
}

TEST_CASE("nonzero count is non-increasing in the penalty along the tuning path") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto tr = logistic_problem(300, 40, {1.0, 1.0, -1.0, 0.5, -0.5}, 0.0, 60 + seed);
    const auto va = logistic_problem(150, 40, {1.0, 1.0, -1.0, 0.5, -0.5}, 0.0, 70 + seed);
    const auto res = tune_penalty(tr.x, tr.y, va.x, va.y);
    REQUIRE(res.path.size() == 20);
    for (std::size_t k = 1; k < res.path.size(); ++k) {
      CHECK(res.path[k].alpha < res.path[k - 1].alpha);
      CHECK(res.path[k].nonzero >= res.path[k - 1].nonzero);
    }
    CHECK(res.path.front().nonzero == 0);
  }
}

TEST_CASE("constant columns are dropped and stay at zero") {
  auto pr = logistic_problem(200, 5, {1.0}, 0.0, 9);
  for (std::size_t i = 0; i < pr.x.rows(); ++i) pr.x(i, 3) = 7.0;
  const auto m = fit_lasso_logistic(pr.x, pr.y, 0.001);
  CHECK_FALSE(m.standardizer.kept[3]);
  CHECK(m.standardizer.kept_count() == 4);
  CHECK(m.weights[3] == 0.0);
}

TEST_CASE("json round trip preserves predictions") {
  const auto pr = logistic_problem(200, 10, {1.0, -1.0}, 0.0, 13);
  const auto m = fit_lasso_logistic(pr.x, pr.y, 0.01);
  const auto back = LassoModel::from_json(m.to_json());
  for (std::size_t i = 0; i < pr.x.rows(); ++i)
    CHECK(predict_logistic(back, pr.x.row(i)).probability == predict_logistic(m, pr.x.row(i)).probability);
}

TEST_CASE("invalid inputs") {
  const auto pr = logistic_problem(50, 3, {1.0}, 0.0, 1);
  CHECK_THROWS_AS(fit_lasso_logistic(pr.x, pr.y, -0.1), ConfigError);
  const std::vector<int> one_class(50, 1);
  CHECK_THROWS_AS(fit_lasso_logistic(pr.x, one_class, 0.1), DataError);
  std::vector<int> bad = pr.y;
  bad[0] = 0;
  CHECK_THROWS_AS(fit_lasso_logistic(pr.x, bad, 0.1), DataError);
}
