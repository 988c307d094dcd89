#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedtrig/nn/model.hpp"

namespace fedtrig::nn {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;

  void validate() const {
    if (!(lr > 0.0)) throw ArgumentError("SgdConfig: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("SgdConfig: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ArgumentError("SgdConfig: weight decay must be >= 0");
    if (batch_size == 0) throw ArgumentError("SgdConfig: batch size must be >= 1");
  }
};

struct MomentumState {
  std::vector<double> velocity;
};

// v <- m*v + g + decay*w ; w <- w - lr*v
inline void sgd_step(std::span<double> weights, std::span<const double> grads,
                     const SgdConfig& config, MomentumState& state) {
  if (grads.size() != weights.size()) {
    throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(weights.size()) + " weights");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient");
  }
  if (state.velocity.size() != weights.size()) state.velocity.assign(weights.size(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double& v = state.velocity[i];
    v = config.momentum * v + grads[i] + config.weight_decay * weights[i];
    weights[i] -= config.lr * v;
  }
}

inline Classifier sgd_step(Classifier model, const ParamVector& grads, const SgdConfig& config,
                           MomentumState& state) {
  if (!grads.layout.entries.empty() && !(grads.layout == model.net.layout())) {
    throw ShapeError("sgd_step: gradient layout does not match model");
  }
  sgd_step(model.net.params(), grads.values, config, state);
  return model;
}

}  // namespace fedtrig::nn
