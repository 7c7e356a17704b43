#include "redrisk/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "redrisk/error.hpp"

namespace redrisk::nn {

using nlohmann::json;

namespace {

// Examples per partial sum in batch_gradient.
constexpr std::size_t kChunk = 8;

std::size_t layer_input_dim(const NetArchitecture& arch, std::size_t layer) {
  return layer == 0 ? arch.input_dim : arch.hidden[layer - 1];
}

std::size_t layer_output_dim(const NetArchitecture& arch, std::size_t layer) {
  return layer < arch.hidden.size() ? arch.hidden[layer] : arch.n_tasks;
}

void check_labels(std::span<const int> labels) {
  for (int y : labels) {
    if (y != 1 && y != -1) throw DataError("multitask labels must be +1 or -1, got " + std::to_string(y));
  }
}

// d/dF log(1 + exp(-yF)) = -y / (1 + exp(yF)).
double loss_derivative(int y, double f) {
  const double yd = static_cast<double>(y);
  const double m = yd * f;
  if (m > 0.0) {
    const double e = std::exp(-m);
    return -yd * e / (1.0 + e);
  }
  return -yd / (1.0 + std::exp(m));
}

double scalar_loss(int y, double f) {
  const double m = -static_cast<double>(y) * f;
  return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

void add_into(Gradients& acc, const Gradients& g) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    auto dst = acc[l].weights.data();
    auto src = g[l].weights.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < acc[l].bias.size(); ++i) acc[l].bias[i] += g[l].bias[i];
  }
}

void scale(Gradients& g, double factor) {
  for (auto& layer : g) {
    for (double& v : layer.weights.data()) v *= factor;
    for (double& v : layer.bias) v *= factor;
  }
}

// Forward + backward for one example accumulating into `acc`; skips zero
// inputs. Mirrors forward_train/backward, which stay as the dense reference.
struct Workspace {
  std::vector<std::size_t> nonzero;
  std::vector<double> input_values;
  std::vector<std::vector<double>> act;  // act[l] = input to layer l (l >= 1)
  std::vector<std::vector<double>> pre;
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

double example_gradient(const NetParamsState& net, std::span<const double> x, std::span<const int> labels,
                        const DropoutMasks& masks, Workspace& ws, Gradients& acc) {
  const std::size_t n_layers = net.layers.size();
  ws.act.resize(n_layers);
  ws.pre.resize(n_layers);

  ws.nonzero.clear();
  ws.input_values.clear();
  const auto& input_mask = masks.layers[0];
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (input_mask[j] && x[j] != 0.0) {
      ws.nonzero.push_back(j);
      ws.input_values.push_back(x[j]);
    }
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    const std::size_t out_dim = layer.bias.size();
    auto& z = ws.pre[l];
    z.assign(layer.bias.begin(), layer.bias.end());
    if (l == 0) {
      for (std::size_t i = 0; i < out_dim; ++i) {
        auto w = layer.weights.row(i);
        double sum = 0.0;
        for (std::size_t k = 0; k < ws.nonzero.size(); ++k) sum += w[ws.nonzero[k]] * ws.input_values[k];
        z[i] += sum;
      }
    } else {
      const auto& in = ws.act[l];
      for (std::size_t i = 0; i < out_dim; ++i) {
        auto w = layer.weights.row(i);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) sum += w[j] * in[j];
        z[i] += sum;
      }
    }
    if (l + 1 < n_layers) {
      auto& next = ws.act[l + 1];
      next.resize(out_dim);
      const auto& mask = masks.layers[l + 1];
      for (std::size_t i = 0; i < out_dim; ++i) next[i] = mask[i] ? std::max(0.0, z[i]) : 0.0;
    }
  }

  const auto& scores = ws.pre.back();
  double loss = 0.0;
  ws.delta.resize(scores.size());
  for (std::size_t m = 0; m < scores.size(); ++m) {
    loss += scalar_loss(labels[m], scores[m]);
    ws.delta[m] = loss_derivative(labels[m], scores[m]);
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = net.layers[l];
    auto& g = acc[l];
    const std::size_t out_dim = layer.bias.size();
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double d = ws.delta[i];
      g.bias[i] += d;
      if (d == 0.0) continue;
      auto gw = g.weights.row(i);
      if (l == 0) {
        for (std::size_t k = 0; k < ws.nonzero.size(); ++k) gw[ws.nonzero[k]] += d * ws.input_values[k];
      } else {
        const auto& in = ws.act[l];
        for (std::size_t j = 0; j < in.size(); ++j) gw[j] += d * in[j];
      }
    }
    if (l == 0) break;
    const std::size_t in_dim = layer.weights.cols();
    ws.delta_prev.assign(in_dim, 0.0);
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double d = ws.delta[i];
      if (d == 0.0) continue;
      auto w = layer.weights.row(i);
      for (std::size_t j = 0; j < in_dim; ++j) ws.delta_prev[j] += w[j] * d;
    }
    const auto& mask = masks.layers[l];
    const auto& z_prev = ws.pre[l - 1];
    for (std::size_t j = 0; j < in_dim; ++j) {
      if (!mask[j] || z_prev[j] <= 0.0) ws.delta_prev[j] = 0.0;
    }
    ws.delta.swap(ws.delta_prev);
  }
  return loss;
}

json layer_json(const DenseLayer& layer) {
  return {{"rows", layer.weights.rows()},
          {"cols", layer.weights.cols()},
          {"weights", std::vector<double>(layer.weights.data().begin(), layer.weights.data().end())},
          {"bias", layer.bias}};
}

DenseLayer layer_from_json(const json& j) {
  DenseLayer layer;
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto weights = j.at("weights").get<std::vector<double>>();
  if (weights.size() != rows * cols) throw DataError("malformed network layer");
  layer.weights = Matrix(rows, cols);
  std::copy(weights.begin(), weights.end(), layer.weights.data().begin());
  layer.bias = j.at("bias").get<std::vector<double>>();
  if (layer.bias.size() != rows) throw DataError("malformed network layer bias");
  return layer;
}

}  // namespace

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void validate(const NetArchitecture& arch) {
  if (arch.input_dim < 1) throw ConfigError("network input dimension must be at least 1");
  if (arch.n_tasks < 1) throw ConfigError("network needs at least one task");
  for (std::size_t w : arch.hidden) {
    if (w < 1) throw ConfigError("hidden layer widths must be at least 1");
  }
}

void validate(const TrainSchedule& s) {
  if (s.minibatch < 1) throw ConfigError("dnnd minibatch must be at least 1");
  if (!(s.lr_start > 0.0)) throw ConfigError("dnnd lr_start must be positive");
  if (!(s.lr_stop > 0.0)) throw ConfigError("dnnd lr_stop must be positive");
  if (!(s.momentum >= 0.0 && s.momentum < 1.0)) throw ConfigError("dnnd momentum must lie in [0,1)");
  if (!(s.weight_decay >= 0.0)) throw ConfigError("dnnd weight_decay must be non-negative");
  if (!(s.max_norm > 0.0)) throw ConfigError("dnnd max_norm must be positive");
  if (!(s.retain_rate > 0.0 && s.retain_rate < 1.0)) throw ConfigError("dnnd dropout_rate must lie in (0,1)");
  if (s.plateau_patience < 1) throw ConfigError("dnnd plateau_patience must be at least 1");
  if (s.max_epochs < 1) throw ConfigError("dnnd max_epochs must be at least 1");
}

NetParamsState init_network(const NetArchitecture& arch, std::uint64_t seed) {
  validate(arch);
  Rng rng(derive_seed(seed, 0x1417ULL));
  NetParamsState net;
  net.arch = arch;
  const std::size_t n_layers = arch.hidden.size() + 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = layer_input_dim(arch, l);
    const std::size_t out = layer_output_dim(arch, l);
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weights.data()) w = rng.normal(0.0, sd);
    net.layers.push_back(std::move(layer));
    net.velocity.push_back({Matrix(out, in), std::vector<double>(out, 0.0)});
  }
  return net;
}

DropoutMasks draw_masks(const NetArchitecture& arch, double retain_rate, Rng& rng) {
  DropoutMasks masks;
  masks.layers.emplace_back(arch.input_dim);
  for (std::size_t w : arch.hidden) masks.layers.emplace_back(w);
  for (auto& layer : masks.layers) {
    for (auto& m : layer) m = rng.bernoulli(retain_rate) ? 1 : 0;
  }
  return masks;
}

DropoutMasks full_masks(const NetArchitecture& arch) {
  DropoutMasks masks;
  masks.layers.emplace_back(arch.input_dim, 1);
  for (std::size_t w : arch.hidden) masks.layers.emplace_back(w, 1);
  return masks;
}

namespace {

ForwardCache forward_impl(const NetParamsState& net, std::span<const double> x, const DropoutMasks* masks,
                          double retain_rate) {
  if (x.size() != net.arch.input_dim) {
    throw ConfigError("network expects " + std::to_string(net.arch.input_dim) + " features, got " +
                      std::to_string(x.size()));
  }
  ForwardCache cache;
  const std::size_t n_layers = net.layers.size();
  cache.inputs.resize(n_layers);
  cache.pre.resize(n_layers);
  cache.masks = masks ? *masks : full_masks(net.arch);

  auto& input = cache.inputs[0];
  input.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) input[j] = masks ? x[j] * cache.masks.layers[0][j] : x[j] * retain_rate;

  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    const auto& in = cache.inputs[l];
    auto& z = cache.pre[l];
    z.resize(layer.bias.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto w = layer.weights.row(i);
      double sum = layer.bias[i];
      for (std::size_t j = 0; j < in.size(); ++j) sum += w[j] * in[j];
      z[i] = sum;
    }
    if (l + 1 < n_layers) {
      auto& next = cache.inputs[l + 1];
      next.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = std::max(0.0, z[i]);
        next[i] = masks ? h * cache.masks.layers[l + 1][i] : h * retain_rate;
      }
    }
  }
  cache.scores = cache.pre.back();
  return cache;
}

}  // namespace

ForwardCache forward_train(const NetParamsState& net, std::span<const double> x, const DropoutMasks& masks) {
  return forward_impl(net, x, &masks, 1.0);
}

ForwardCache forward_test(const NetParamsState& net, std::span<const double> x, double retain_rate) {
  return forward_impl(net, x, nullptr, retain_rate);
}

double multitask_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("score and label counts differ");
  check_labels(labels);
  double loss = 0.0;
  for (std::size_t m = 0; m < scores.size(); ++m) loss += scalar_loss(labels[m], scores[m]);
  return loss;
}

Gradients zero_gradients(const NetParamsState& net) {
  Gradients g;
  for (const auto& layer : net.layers) {
    g.push_back({Matrix(layer.weights.rows(), layer.weights.cols()), std::vector<double>(layer.bias.size(), 0.0)});
  }
  return g;
}

Gradients backward(const NetParamsState& net, const ForwardCache& cache, std::span<const int> labels) {
  if (labels.size() != cache.scores.size()) throw DataError("label count does not match task count");
  check_labels(labels);
  Gradients g = zero_gradients(net);
  std::vector<double> delta(cache.scores.size());
  for (std::size_t m = 0; m < delta.size(); ++m) delta[m] = loss_derivative(labels[m], cache.scores[m]);

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const auto& in = cache.inputs[l];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      g[l].bias[i] = delta[i];
      auto gw = g[l].weights.row(i);
      for (std::size_t j = 0; j < in.size(); ++j) gw[j] = delta[i] * in[j];
    }
    if (l == 0) break;
    std::vector<double> prev(in.size(), 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      auto w = layer.weights.row(i);
      for (std::size_t j = 0; j < prev.size(); ++j) prev[j] += w[j] * delta[i];
    }
    const auto& mask = cache.masks.layers[l];
    const auto& z = cache.pre[l - 1];
    for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= (mask[j] ? 1.0 : 0.0) * (z[j] > 0.0 ? 1.0 : 0.0);
    delta.swap(prev);
  }
  return g;
}

void sgd_step(NetParamsState& net, const Gradients& grads, const TrainSchedule& schedule, double lr) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    auto& vel = net.velocity[l];
    auto w = layer.weights.data();
    auto v = vel.weights.data();
    auto g = grads[l].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = schedule.momentum * v[i] - lr * (g[i] + schedule.weight_decay * w[i]);
      w[i] += v[i];
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      vel.bias[i] = schedule.momentum * vel.bias[i] - lr * grads[l].bias[i];
      layer.bias[i] += vel.bias[i];
    }
    if (l + 1 < net.layers.size()) {
      for (std::size_t i = 0; i < layer.weights.rows(); ++i) {
        auto row = layer.weights.row(i);
        double sq = 0.0;
        for (double x : row) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > schedule.max_norm) {
          const double factor = schedule.max_norm / norm;
          for (double& x : row) x *= factor;
        }
      }
    }
  }
}

double max_hidden_norm(const NetParamsState& net) {
  double worst = 0.0;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const auto& weights = net.layers[l].weights;
    for (std::size_t i = 0; i < weights.rows(); ++i) {
      double sq = 0.0;
      for (double x : weights.row(i)) sq += x * x;
      worst = std::max(worst, std::sqrt(sq));
    }
  }
  return worst;
}

Gradients batch_gradient(const NetParamsState& net, const Matrix& x, std::span<const int> labels,
                         std::span<const std::size_t> rows, std::span<const DropoutMasks> masks, double& loss_sum,
                         Execution execution) {
  const std::size_t m = net.arch.n_tasks;
  const std::size_t n_chunks = (rows.size() + kChunk - 1) / kChunk;
  std::vector<Gradients> partial(n_chunks, zero_gradients(net));
  std::vector<double> partial_loss(n_chunks, 0.0);

  auto run_chunk = [&](std::size_t c, Workspace& ws) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(rows.size(), begin + kChunk);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = rows[i];
      partial_loss[c] += example_gradient(net, x.row(r), labels.subspan(r * m, m), masks[i], ws, partial[c]);
    }
  };

  const auto count = static_cast<std::ptrdiff_t>(n_chunks);
  if (execution == Execution::kParallel) {
#pragma omp parallel
    {
      Workspace ws;
#pragma omp for schedule(static)
      for (std::ptrdiff_t c = 0; c < count; ++c) run_chunk(static_cast<std::size_t>(c), ws);
    }
  } else {
    Workspace ws;
    for (std::ptrdiff_t c = 0; c < count; ++c) run_chunk(static_cast<std::size_t>(c), ws);
  }

  Gradients total = zero_gradients(net);
  loss_sum = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    add_into(total, partial[c]);
    loss_sum += partial_loss[c];
  }
  if (!rows.empty()) scale(total, 1.0 / static_cast<double>(rows.size()));
  return total;
}

Gradients batch_gradient_reference(const NetParamsState& net, const Matrix& x, std::span<const int> labels,
                                   std::span<const std::size_t> rows, std::span<const DropoutMasks> masks,
                                   double& loss_sum) {
  const std::size_t m = net.arch.n_tasks;
  Gradients total = zero_gradients(net);
  loss_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto y = labels.subspan(rows[i] * m, m);
    const auto cache = forward_train(net, x.row(rows[i]), masks[i]);
    loss_sum += multitask_loss(cache.scores, y);
    add_into(total, backward(net, cache, y));
  }
  if (!rows.empty()) scale(total, 1.0 / static_cast<double>(rows.size()));
  return total;
}

TrainedNet train_dnnd(const Matrix& x, std::span<const int> labels, const NetArchitecture& arch,
                      const TrainSchedule& schedule) {
  validate(arch);
  validate(schedule);
  if (x.cols() != arch.input_dim) throw DataError("feature count does not match the network input dimension");
  if (labels.size() != x.rows() * arch.n_tasks) throw DataError("label matrix is not aligned with the rows");
  if (x.rows() == 0) throw DataError("cannot train on an empty dataset");
  check_labels(labels);

  TrainedNet out;
  out.schedule = schedule;
  auto& report = out.report;
  if (x.rows() == 1) report.warnings.push_back("degenerate single-row training set");

  NetParamsState net = init_network(arch, schedule.seed);
  NetParamsState best = net;
  Rng rng(derive_seed(schedule.seed, 0xD80FULL));
  const std::size_t n = x.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<DropoutMasks> masks;

  double lr = schedule.lr_start;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t epoch = 0;
  for (; epoch < schedule.max_epochs && lr >= schedule.lr_stop; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += schedule.minibatch) {
      const std::size_t end = std::min(n, begin + schedule.minibatch);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);
      masks.clear();
      for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(draw_masks(arch, schedule.retain_rate, rng));
      double batch_loss = 0.0;
      const auto grads = batch_gradient(net, x, labels, batch, masks, batch_loss, schedule.execution);
      sgd_step(net, grads, schedule, lr);
      if (schedule.check_max_norm && max_hidden_norm(net) > schedule.max_norm * (1.0 + 1e-12)) {
        throw std::logic_error("max-norm constraint violated after update");
      }
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(n);
    report.loss_history.push_back(epoch_loss);
    report.lr_history.push_back(lr);

    if (epoch_loss < best_loss * (1.0 - schedule.plateau_tolerance) || !std::isfinite(best_loss)) {
      best_loss = epoch_loss;
      best = net;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= schedule.plateau_patience) {
      lr *= 0.5;
      stale = 0;
    }
  }
  report.hit_max_epochs = lr >= schedule.lr_stop;
  report.final_lr = lr;
  report.best_loss = best_loss;
  out.net = std::move(best);
  return out;
}

std::vector<TaskPrediction> predict_dnnd(const NetParamsState& net, double retain_rate, std::span<const double> x) {
  const auto cache = forward_test(net, x, retain_rate);
  std::vector<TaskPrediction> out;
  for (double f : cache.scores) out.push_back({f, sigmoid(f), f >= 0.0 ? 1 : -1});
  return out;
}

std::vector<TaskPrediction> predict_dnnd(const TrainedNet& model, std::span<const double> x) {
  return predict_dnnd(model.net, model.schedule.retain_rate, x);
}

json TrainedNet::to_json() const {
  json layers = json::array();
  for (const auto& l : net.layers) layers.push_back(layer_json(l));
  const auto& s = schedule;
  return {{"architecture", {{"input_dim", net.arch.input_dim}, {"hidden", net.arch.hidden}, {"n_tasks", net.arch.n_tasks}}},
          {"schedule",
           {{"minibatch", s.minibatch}, {"lr_start", s.lr_start}, {"lr_stop", s.lr_stop}, {"momentum", s.momentum},
            {"weight_decay", s.weight_decay}, {"max_norm", s.max_norm}, {"dropout_rate", s.retain_rate},
            {"plateau_patience", s.plateau_patience}, {"plateau_tolerance", s.plateau_tolerance},
            {"max_epochs", s.max_epochs}, {"seed", s.seed}}},
          {"layers", std::move(layers)},
          {"best_epoch", report.best_epoch},
          {"best_loss", report.best_loss}};
}

TrainedNet TrainedNet::from_json(const json& j) {
  TrainedNet t;
  const auto& a = j.at("architecture");
  t.net.arch.input_dim = a.at("input_dim").get<std::size_t>();
  t.net.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
  t.net.arch.n_tasks = a.at("n_tasks").get<std::size_t>();
  validate(t.net.arch);
  const auto& s = j.at("schedule");
  t.schedule.minibatch = s.at("minibatch").get<std::size_t>();
  t.schedule.lr_start = s.at("lr_start").get<double>();
  t.schedule.lr_stop = s.at("lr_stop").get<double>();
  t.schedule.momentum = s.at("momentum").get<double>();
  t.schedule.weight_decay = s.at("weight_decay").get<double>();
  t.schedule.max_norm = s.at("max_norm").get<double>();
  t.schedule.retain_rate = s.at("dropout_rate").get<double>();
  t.schedule.plateau_patience = s.at("plateau_patience").get<std::size_t>();
  t.schedule.plateau_tolerance = s.at("plateau_tolerance").get<double>();
  t.schedule.max_epochs = s.at("max_epochs").get<std::size_t>();
  t.schedule.seed = s.at("seed").get<std::uint64_t>();
  for (const auto& l : j.at("layers")) t.net.layers.push_back(layer_from_json(l));
  if (t.net.layers.size() != t.net.arch.hidden.size() + 1) throw DataError("network layer count mismatch");
  for (std::size_t l = 0; l < t.net.layers.size(); ++l) {
    if (t.net.layers[l].weights.rows() != layer_output_dim(t.net.arch, l) ||
        t.net.layers[l].weights.cols() != layer_input_dim(t.net.arch, l)) {
      throw DataError("network layer shape mismatch");
    }
    t.net.velocity.push_back({Matrix(t.net.layers[l].weights.rows(), t.net.layers[l].weights.cols()),
                              std::vector<double>(t.net.layers[l].bias.size(), 0.0)});
  }
  t.report.best_epoch = j.at("best_epoch").get<std::size_t>();
  t.report.best_loss = j.at("best_loss").get<double>();
  return t;
}

}  // namespace redrisk::nn
