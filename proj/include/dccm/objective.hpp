#pragma once

#include <cstdint>
#include <optional>

#include "dccm/config.hpp"
#include "dccm/correlation.hpp"
#include "dccm/model.hpp"
#include "dccm/robustness.hpp"

namespace dccm {

struct ObjectiveSettings {
  double thres1 = 0.95;
  double thres2 = 0.9;
  double alpha = 5.0;
  double beta = 0.1;
  double gamma = 1.0;
  LossToggles toggles;
  SamplingStrategy sampling = SamplingStrategy::nearest_pos_random_neg;
  std::size_t mi_pairs = 0;  // 0 uses the batch size
  TransformSpec transform;

  static ObjectiveSettings from_config(const ExperimentConfig& c);
};

/// Supervision derived from detached predictions of the original batch.
struct StepTargets {
  Tensor similarity;
  PseudoGraph graph{0, {}, 0.5};
  PseudoLabels labels;
  std::optional<TripletBatch> pairs;  // absent when the batch has no negatives
};

StepTargets compute_targets(const Tensor& z, const ObjectiveSettings& s, std::uint64_t sampling_seed);

struct StepResult {
  Var loss;
  LossBreakdown parts;
  StepTargets targets;
  bool mi_skipped = false;
};

/// Records the full objective for one minibatch on tape. Targets are computed
/// from this forward pass unless fixed ones are supplied.
StepResult build_objective(Tape& tape, Encoder& encoder, Discriminator& disc, const Tensor& batch,
                           const ObjectiveSettings& s, std::uint64_t transform_seed, std::uint64_t sampling_seed,
                           const StepTargets* fixed = nullptr);

}  // namespace dccm
