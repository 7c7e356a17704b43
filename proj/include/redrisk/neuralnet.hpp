#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "redrisk/execution.hpp"
#include "redrisk/matrix.hpp"
#include "redrisk/random.hpp"

namespace redrisk::nn {

struct NetArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{50, 50};
  std::size_t n_tasks = 6;

  bool operator==(const NetArchitecture&) const = default;
};

void validate(const NetArchitecture& arch);

// Fully connected layer, weights stored out x in.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

// Hidden layers (rectified linear) followed by one linear output layer with a
// row per task. Every task head reads the same last hidden layer.
struct NetParamsState {
  NetArchitecture arch;
  std::vector<DenseLayer> layers;
  std::vector<DenseLayer> velocity;

  std::size_t hidden_count() const { return layers.size() - 1; }
  bool operator==(const NetParamsState&) const = default;
};

using Gradients = std::vector<DenseLayer>;

struct TrainSchedule {
  std::size_t minibatch = 64;
  double lr_start = 0.1;
  double lr_stop = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double max_norm = 1.0;
  // Probability that an input feature or hidden unit is kept during training;
  // test-time activations are scaled by the same factor.
  double retain_rate = 0.5;
  std::size_t plateau_patience = 2;
  double plateau_tolerance = 1e-4;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  // Re-checks the max-norm constraint after every update.
  bool check_max_norm = false;
  Execution execution = Execution::kParallel;
};

void validate(const TrainSchedule& schedule);

// Zero-mean normal weights with variance 2 / fan_in; zero biases and momentum.
NetParamsState init_network(const NetArchitecture& arch, std::uint64_t seed);

// masks[0] covers the input features, masks[l] the output of hidden layer l.
struct DropoutMasks {
  std::vector<std::vector<std::uint8_t>> layers;
};

DropoutMasks draw_masks(const NetArchitecture& arch, double retain_rate, Rng& rng);
DropoutMasks full_masks(const NetArchitecture& arch);

struct ForwardCache {
  // inputs[l]: the (masked or scaled) activation fed to layer l.
  std::vector<std::vector<double>> inputs;
  // pre[l]: pre-activation of layer l.
  std::vector<std::vector<double>> pre;
  DropoutMasks masks;
  std::vector<double> scores;  // F_m(x), one per task
};

// Training-mode pass with the given masks.
ForwardCache forward_train(const NetParamsState& net, std::span<const double> x, const DropoutMasks& masks);
// Test-mode pass: nothing dropped, every dropout-affected activation scaled by
// retain_rate.
ForwardCache forward_test(const NetParamsState& net, std::span<const double> x, double retain_rate);

// Sum over tasks of log(1 + exp(-y_m F_m)). Throws DataError on labels
// outside {+1, -1}.
double multitask_loss(std::span<const double> scores, std::span<const int> labels);

// Exact gradient of multitask_loss for the cached (masked) pass.
Gradients backward(const NetParamsState& net, const ForwardCache& cache, std::span<const int> labels);

Gradients zero_gradients(const NetParamsState& net);

// velocity <- momentum * velocity - lr * (grad + decay * weight); weight += velocity;
// then hidden-unit incoming weight vectors are projected onto the max-norm
// ball. Biases are exempt from decay and the norm constraint.
void sgd_step(NetParamsState& net, const Gradients& grads, const TrainSchedule& schedule, double lr);

// Largest incoming-weight norm over hidden units.
double max_hidden_norm(const NetParamsState& net);

// Mean gradient over `rows`, summing per-example contributions in fixed-size
// chunks so the result does not depend on the thread count. Returns the summed
// loss through `loss_sum`.
Gradients batch_gradient(const NetParamsState& net, const Matrix& x, std::span<const int> labels,
                         std::span<const std::size_t> rows, std::span<const DropoutMasks> masks,
                         double& loss_sum, Execution execution);
// Single-accumulator serial reference for batch_gradient.
Gradients batch_gradient_reference(const NetParamsState& net, const Matrix& x, std::span<const int> labels,
                                   std::span<const std::size_t> rows, std::span<const DropoutMasks> masks,
                                   double& loss_sum);

struct TrainReport {
  std::vector<double> loss_history;  // mean per-example training loss per epoch
  std::vector<double> lr_history;    // learning rate used in each epoch
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
  double final_lr = 0.0;
  bool hit_max_epochs = false;
  std::vector<std::string> warnings;
};

struct TrainedNet {
  NetParamsState net;
  TrainSchedule schedule;
  TrainReport report;

  nlohmann::json to_json() const;
  static TrainedNet from_json(const nlohmann::json& j);
};

// `labels` is row-major n x n_tasks with entries +1/-1.
TrainedNet train_dnnd(const Matrix& x, std::span<const int> labels, const NetArchitecture& arch,
                      const TrainSchedule& schedule);

struct TaskPrediction {
  double score = 0.0;
  double probability = 0.5;
  int label = 1;
};

std::vector<TaskPrediction> predict_dnnd(const NetParamsState& net, double retain_rate, std::span<const double> x);
std::vector<TaskPrediction> predict_dnnd(const TrainedNet& model, std::span<const double> x);

double sigmoid(double v);

}  // namespace redrisk::nn
