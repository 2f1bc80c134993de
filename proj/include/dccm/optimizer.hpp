#pragma once

#include <vector>

#include "dccm/model.hpp"

namespace dccm {

/// RMSprop running averages of squared gradients, one per parameter.
struct OptimizerState {
  double learning_rate = 1e-4;
  double decay = 0.99;
  double epsilon = 1e-8;
  std::vector<NamedTensor> cache;  // created on the first step
};

/// cache <- decay * cache + (1 - decay) g^2
/// param <- param - lr * g / (sqrt(cache) + eps)
/// Gradients are read from each tensor's grad slot (absent means zero). All
/// gradients are checked before anything is updated; a non-finite one throws
/// DivergenceError naming its parameter.
void rmsprop_step(const std::vector<NamedTensor*>& params, OptimizerState& state);

}  // namespace dccm
