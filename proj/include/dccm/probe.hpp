#pragma once

#include <cstdint>
#include <vector>

#include "dccm/data_io.hpp"
#include "dccm/model.hpp"

namespace dccm {

enum class ProbeFeature { deep_tap, prediction_input };

struct ProbeSettings {
  std::size_t hidden = 200;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains linear(hidden)+relu+linear(classes) with cross-entropy and RMSprop
/// on train features ([N, F]) and returns top-1 accuracy on the test features.
/// Features are standardised with the training split's statistics. Throws
/// ContractError if the splits do not carry the same set of labels.
double probe_features(const Tensor& train_x, const std::vector<std::size_t>& train_y, const Tensor& test_x,
                      const std::vector<std::size_t>& test_y, const ProbeSettings& settings = {});

/// Frozen-encoder variant: features come from the chosen layer. The encoder's
/// parameters are only read.
double probe(Encoder& encoder, const Dataset& train, const Dataset& test, ProbeFeature feature,
             const ProbeSettings& settings = {});

}  // namespace dccm
