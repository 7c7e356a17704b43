#include "redrisk/linear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "redrisk/error.hpp"
#include "redrisk/metrics.hpp"

namespace redrisk::linear {

using nlohmann::json;

namespace {

constexpr double kMinScale = 1e-12;

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// log(1 + exp(-m)) without overflow.
double logistic_loss(double m) { return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

double soft_threshold(double v, double alpha) {
  if (v > alpha) return v - alpha;
  if (v < -alpha) return v + alpha;
  return 0.0;
}

void check_labels(std::span<const int> y, std::size_t rows) {
  if (y.size() != rows) throw DataError("label count does not match row count");
  bool pos = false;
  bool neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw DataError("labels must be +1 or -1");
    (v > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("training labels contain a single class; lasso fit is undefined");
}

// Standardized kept columns, stored column-major.
struct Design {
  std::vector<std::size_t> features;
  std::vector<std::vector<double>> columns;
  std::size_t n = 0;
};

Design make_design(const Matrix& x, const Standardizer& s) {
  Design d;
  d.n = x.rows();
  for (std::size_t j = 0; j < x.cols(); ++j) {
    if (!s.kept[j]) continue;
    d.features.push_back(j);
    std::vector<double> col(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) col[i] = (x(i, j) - s.mean[j]) / s.scale[j];
    d.columns.push_back(std::move(col));
  }
  return d;
}

double base_log_odds(std::span<const int> y) {
  const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  return std::log(pos / (static_cast<double>(y.size()) - pos));
}

// Kept columns as nonzero (row, raw value) lists plus the standardization;
// z_ij = (x_ij - mean) / scale.
struct SparseColumn {
  std::vector<std::uint32_t> rows;
  std::vector<double> values;
  double mean = 0.0;
  double scale = 1.0;
};

struct SparseDesign {
  std::vector<std::size_t> features;
  std::vector<SparseColumn> columns;
  std::size_t n = 0;
};

SparseDesign make_sparse_design(const Matrix& x, const Standardizer& s) {
  SparseDesign d;
  d.n = x.rows();
  for (std::size_t j = 0; j < x.cols(); ++j) {
    if (!s.kept[j]) continue;
    d.features.push_back(j);
    SparseColumn col;
    col.mean = s.mean[j];
    col.scale = s.scale[j];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (x(i, j) != 0.0) {
        col.rows.push_back(static_cast<std::uint32_t>(i));
        col.values.push_back(x(i, j));
      }
    }
    d.columns.push_back(std::move(col));
  }
  return d;
}

// Each outer step replaces the log-loss by its second-order expansion at the
// current fit and solves the resulting penalized weighted least squares by
// cyclic coordinate descent; the proposed move is halved until the true
// objective does not increase.
//
// The working residual is kept as rho_i + offset so that a coordinate update
// only touches the column's nonzero rows.
class Solver {
 public:
  Solver(const SparseDesign& d, std::span<const int> y, double alpha, std::vector<double> w, double b,
         std::size_t max_inner, double tolerance)
      : d_(d), y_(y), alpha_(alpha), w_(std::move(w)), b_(b), max_inner_(max_inner), tol_(tolerance) {
    eta_ = linear_predictor(w_, b_);
    loss_ = mean_loss(eta_);
  }

  double objective() const { return loss_ + alpha_ * l1(w_); }
  const std::vector<double>& weights() const { return w_; }
  double intercept() const { return b_; }

  // Returns the largest absolute coefficient change (intercept included).
  double step() {
    const std::size_t n = d_.n;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> wt(n);
    std::vector<double> rho(n);
    double offset = 0.0;
    double wsum = 0.0;
    double wr = 0.0;  // sum of wt * residual
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(eta_[i]);
      wt[i] = std::max(p * (1.0 - p), 1e-5);
      rho[i] = ((y_[i] > 0 ? 1.0 : 0.0) - p) / wt[i];
      wsum += wt[i];
      wr += wt[i] * rho[i];
    }
    const std::size_t p = w_.size();
    std::vector<double> wx(p, 0.0);  // sum over nonzeros of wt * x
    std::vector<double> curv(p, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      const auto& c = d_.columns[k];
      double a = 0.0;
      double bb = 0.0;
      for (std::size_t t = 0; t < c.rows.size(); ++t) {
        const double v = wt[c.rows[t]] * c.values[t];
        a += v;
        bb += v * c.values[t];
      }
      wx[k] = a;
      curv[k] = (bb - 2.0 * c.mean * a + c.mean * c.mean * wsum) * inv_n / (c.scale * c.scale);
    }

    std::vector<double> w = w_;
    double b = b_;
    auto pass = [&](bool active_only) {
      double biggest = 0.0;
      const double db = wr / wsum;
      if (db != 0.0) {
        b += db;
        offset -= db;
        wr -= db * wsum;
        biggest = std::abs(db);
      }
      for (std::size_t k = 0; k < p; ++k) {
        if ((active_only && w[k] == 0.0) || curv[k] <= 0.0) continue;
        const auto& c = d_.columns[k];
        double sparse_dot = 0.0;
        for (std::size_t t = 0; t < c.rows.size(); ++t) sparse_dot += wt[c.rows[t]] * c.values[t] * rho[c.rows[t]];
        const double g = (sparse_dot + offset * wx[k] - c.mean * wr) / c.scale;
        const double updated = soft_threshold(g * inv_n + curv[k] * w[k], alpha_) / curv[k];
        const double delta = updated - w[k];
        if (delta == 0.0) continue;
        const double f = delta / c.scale;
        for (std::size_t t = 0; t < c.rows.size(); ++t) rho[c.rows[t]] -= f * c.values[t];
        offset += f * c.mean;
        wr -= f * (wx[k] - c.mean * wsum);
        w[k] = updated;
        biggest = std::max(biggest, std::abs(delta));
      }
      return biggest;
    };
    bool full = true;
    for (std::size_t it = 0; it < max_inner_; ++it) {
      if (pass(!full) < tol_) {
        if (full) break;
        full = true;
      } else {
        full = false;
      }
    }

    // Backtrack along the segment towards the proposal.
    double t = 1.0;
    for (int halvings = 0; halvings < 40; ++halvings, t *= 0.5) {
      std::vector<double> cand_w(p);
      for (std::size_t k = 0; k < p; ++k) cand_w[k] = t == 1.0 ? w[k] : w_[k] + t * (w[k] - w_[k]);
      const double cand_b = t == 1.0 ? b : b_ + t * (b - b_);
      auto cand_eta = linear_predictor(cand_w, cand_b);
      const double cand_loss = mean_loss(cand_eta);
      if (cand_loss + alpha_ * l1(cand_w) <= objective()) {
        double biggest = std::abs(cand_b - b_);
        for (std::size_t k = 0; k < p; ++k) biggest = std::max(biggest, std::abs(cand_w[k] - w_[k]));
        w_ = std::move(cand_w);
        b_ = cand_b;
        eta_ = std::move(cand_eta);
        loss_ = cand_loss;
        return biggest;
      }
    }
    return 0.0;
  }

 private:
  static double l1(const std::vector<double>& w) {
    double s = 0.0;
    for (double v : w) s += std::abs(v);
    return s;
  }

  std::vector<double> linear_predictor(const std::vector<double>& w, double b) const {
    double shift = b;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] != 0.0) shift -= w[k] * d_.columns[k].mean / d_.columns[k].scale;
    }
    std::vector<double> eta(d_.n, shift);
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] == 0.0) continue;
      const auto& c = d_.columns[k];
      const double f = w[k] / c.scale;
      for (std::size_t t = 0; t < c.rows.size(); ++t) eta[c.rows[t]] += f * c.values[t];
    }
    return eta;
  }

  double mean_loss(const std::vector<double>& eta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < d_.n; ++i) s += logistic_loss(y_[i] * eta[i]);
    return s / static_cast<double>(d_.n);
  }

  const SparseDesign& d_;
  std::span<const int> y_;
  double alpha_;
  std::vector<double> w_;
  double b_;
  std::size_t max_inner_;
  double tol_;
  std::vector<double> eta_;
  double loss_ = 0.0;
};

}  // namespace

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  s.mean.assign(p, 0.0);
  s.scale.assign(p, 1.0);
  s.kept.assign(p, false);
  if (n == 0) return s;
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += x(i, j);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.mean[j] = mean;
    if (sd >= kMinScale) {
      s.scale[j] = sd;
      s.kept[j] = true;
    }
  }
  return s;
}

void Standardizer::apply_row(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = kept[j] ? (x[j] - mean[j]) / scale[j] : 0.0;
}

Matrix Standardizer::apply(const Matrix& x) const {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) apply_row(x.row(i), out.row(i));
  return out;
}

std::size_t Standardizer::kept_count() const { return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true)); }

std::size_t LassoModel::nonzero_count() const {
  return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
}

LassoModel fit_lasso_logistic(const Matrix& x, std::span<const int> y, double alpha, const LassoOptions& options,
                              const LassoModel* warm) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("lasso penalty must be finite and non-negative");
  if (options.max_sweeps < 1) throw ConfigError("lasso max_sweeps must be at least 1");
  check_labels(y, x.rows());

  LassoModel model;
  model.alpha = alpha;
  model.standardizer = Standardizer::fit(x);
  const SparseDesign design = make_sparse_design(x, model.standardizer);
  if (warm && warm->weights.size() != x.cols()) throw ConfigError("warm start has the wrong feature count");

  std::vector<double> w(design.features.size(), 0.0);
  double b = base_log_odds(y);
  if (warm) {
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = warm->weights[design.features[k]];
    b = warm->intercept;
  }
  Solver solver(design, y, alpha, std::move(w), b, options.max_sweeps, options.tolerance);

  while (model.sweeps < options.max_sweeps) {
    const double change = solver.step();
    ++model.sweeps;
    model.objective_history.push_back(solver.objective());
    if (change < options.tolerance) {
      model.converged = true;
      break;
    }
  }
  if (!model.converged) {
    model.warnings.push_back("lasso stopped after " + std::to_string(model.sweeps) +
                             " sweeps without converging (alpha " + std::to_string(alpha) + ")");
  }

  model.weights.assign(x.cols(), 0.0);
  for (std::size_t k = 0; k < design.features.size(); ++k) model.weights[design.features[k]] = solver.weights()[k];
  model.intercept = solver.intercept();
  return model;
}

double alpha_max(const Matrix& x, std::span<const int> y) {
  check_labels(y, x.rows());
  const Standardizer s = Standardizer::fit(x);
  const Design d = make_design(x, s);
  const double p = sigmoid(base_log_odds(y));
  double best = 0.0;
  for (const auto& z : d.columns) {
    double g = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) g += (y[i] > 0 ? p - 1.0 : p) * z[i];
    best = std::max(best, std::abs(g / static_cast<double>(d.n)));
  }
  // Nudged up so rounding in the fitted intercept cannot leave a weight at 1e-17.
  return best * (1.0 + 1e-9);
}

std::vector<double> default_grid(double alpha_max, std::size_t count, double ratio) {
  if (count < 1) throw ConfigError("lasso grid needs at least one value");
  if (!(alpha_max > 0.0)) throw DataError("alpha_max must be positive");
  std::vector<double> grid;
  if (count == 1) return {alpha_max};
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) grid.push_back(alpha_max * std::exp(-step * static_cast<double>(k)));
  return grid;
}

double kkt_violation(const LassoModel& model, const Matrix& x, std::span<const int> y) {
  const Design d = make_design(x, model.standardizer);
  std::vector<double> eta(d.n, model.intercept);
  for (std::size_t k = 0; k < d.features.size(); ++k) {
    const double w = model.weights[d.features[k]];
    for (std::size_t i = 0; i < d.n; ++i) eta[i] += w * d.columns[k][i];
  }
  std::vector<double> r(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    const double p = sigmoid(eta[i]);
    r[i] = y[i] > 0 ? p - 1.0 : p;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < d.features.size(); ++k) {
    double g = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) g += r[i] * d.columns[k][i];
    g /= static_cast<double>(d.n);
    const double w = model.weights[d.features[k]];
    const double v = w == 0.0 ? std::max(0.0, std::abs(g) - model.alpha) : std::abs(g + model.alpha * (w > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

TuneResult tune_penalty(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_val,
                        std::span<const int> y_val, std::vector<double> grid, const LassoOptions& options) {
  if (grid.empty()) grid = default_grid(alpha_max(x_train, y_train));
  std::vector<std::size_t> order(grid.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  TuneResult result;
  result.path.resize(grid.size());
  bool have = false;
  double best_f = -1.0;
  const LassoModel* warm = nullptr;
  LassoModel previous;
  std::vector<int> predicted(x_val.rows());
  for (std::size_t k : order) {
    LassoModel m = fit_lasso_logistic(x_train, y_train, grid[k], options, warm);
    for (std::size_t i = 0; i < x_val.rows(); ++i) predicted[i] = predict_logistic(m, x_val.row(i)).label;
    const double f = eval::confusion_metrics(y_val, predicted).f_measure;
    result.path[k] = {grid[k], f, m.nonzero_count(), m.converged};
    // Larger alphas come first, so a strict improvement is needed to move on.
    if (!have || f > best_f) {
      have = true;
      best_f = f;
      result.best_alpha = grid[k];
      result.model = m;
    }
    previous = std::move(m);
    warm = &previous;
  }
  return result;
}

LogisticPrediction predict_logistic(const LassoModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size()) {
    throw ConfigError("model expects " + std::to_string(model.weights.size()) + " features, got " +
                      std::to_string(x.size()));
  }
  const auto& s = model.standardizer;
  double margin = model.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (model.weights[j] != 0.0) margin += model.weights[j] * (x[j] - s.mean[j]) / s.scale[j];
  }
  const double p = sigmoid(margin);
  return {p, p >= 0.5 ? 1 : -1};
}

json LassoModel::to_json() const {
  std::vector<int> kept_flags(standardizer.kept.begin(), standardizer.kept.end());
  return {{"mean", standardizer.mean}, {"scale", standardizer.scale}, {"kept", kept_flags},
          {"weights", weights},        {"intercept", intercept},      {"alpha", alpha},
          {"sweeps", sweeps},          {"converged", converged}};
}

LassoModel LassoModel::from_json(const json& j) {
  LassoModel m;
  m.standardizer.mean = j.at("mean").get<std::vector<double>>();
  m.standardizer.scale = j.at("scale").get<std::vector<double>>();
  for (int k : j.at("kept").get<std::vector<int>>()) m.standardizer.kept.push_back(k != 0);
  m.weights = j.at("weights").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.alpha = j.at("alpha").get<double>();
  m.sweeps = j.at("sweeps").get<std::size_t>();
  m.converged = j.at("converged").get<bool>();
  const std::size_t p = m.weights.size();
  if (m.standardizer.mean.size() != p || m.standardizer.scale.size() != p || m.standardizer.kept.size() != p) {
    throw DataError("malformed lasso model");
  }
  return m;
}

}  // namespace redrisk::linear
