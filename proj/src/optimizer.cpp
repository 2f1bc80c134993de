#include "dccm/optimizer.hpp"

#include <cmath>

#include "dccm/errors.hpp"

namespace dccm {

void rmsprop_step(const std::vector<NamedTensor*>& params, OptimizerState& state) {
  if (state.cache.empty()) {
    for (const auto* p : params) state.cache.push_back({p->name, Tensor(p->value.shape(), 0.0)});
  }
  if (state.cache.size() != params.size()) {
    throw DimensionError("optimizer holds " + std::to_string(state.cache.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const NamedTensor& p = *params[k];
    if (state.cache[k].value.shape() != p.value.shape() || state.cache[k].name != p.name) {
      throw DimensionError("optimizer slot '" + state.cache[k].name + "' does not match parameter '" + p.name + "'");
    }
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const double rho = state.decay, lr = state.learning_rate, eps = state.epsilon;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    Tensor& cache = state.cache[k].value;
    const auto grad = value.grad();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      cache[i] = rho * cache[i] + (1.0 - rho) * g * g;
      value[i] -= lr * g / (std::sqrt(cache[i]) + eps);
    }
  }
}

}  // namespace dccm
