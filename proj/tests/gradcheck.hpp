#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "redrisk/neuralnet.hpp"

namespace testsupport {

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

inline bool same_activation_pattern(const redrisk::nn::ForwardCache& a, const redrisk::nn::ForwardCache& b) {
  for (std::size_t l = 0; l + 1 < a.pre.size(); ++l) {
    for (std::size_t j = 0; j < a.pre[l].size(); ++j) {
      if ((a.pre[l][j] > 0.0) != (b.pre[l][j] > 0.0)) return false;
    }
  }
  return true;
}

// Central differences of the masked loss against backward(), parameter by
// parameter. Perturbations that move a rectifier across its kink are skipped.
inline GradCheck check_gradients(const redrisk::nn::NetParamsState& net, std::span<const double> x,
                                 const redrisk::nn::DropoutMasks& masks, std::span<const int> labels,
                                 double h = 1e-6) {
  using namespace redrisk::nn;
  const auto base = forward_train(net, x, masks);
  const auto grads = backward(net, base, labels);
  GradCheck out;
  auto probe = net;
  auto visit = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const auto plus = forward_train(probe, x, masks);
    param = saved - h;
    const auto minus = forward_train(probe, x, masks);
    param = saved;
    if (!same_activation_pattern(base, plus) || !same_activation_pattern(base, minus)) {
      ++out.skipped_kinks;
      return;
    }
    const double fd = (multitask_loss(plus.scores, labels) - multitask_loss(minus.scores, labels)) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    const double rel = scale == 0.0 ? 0.0 : std::abs(analytic - fd) / scale;
    out.max_relative_error = std::max(out.max_relative_error, rel);
    ++out.checked;
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& layer = probe.layers[l];
    for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
      for (std::size_t c = 0; c < layer.weights.cols(); ++c) visit(layer.weights(r, c), grads[l].weights(r, c));
    }
    for (std::size_t r = 0; r < layer.bias.size(); ++r) visit(layer.bias[r], grads[l].bias[r]);
  }
  return out;
}

}  // namespace testsupport
