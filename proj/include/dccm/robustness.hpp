#pragma once

#include <cstdint>
#include <vector>

#include "dccm/correlation.hpp"
#include "dccm/tape.hpp"
#include "dccm/tensor.hpp"

namespace dccm {

/// Enabled geometric transforms and their ranges. Each sample draws its own
/// composition; all kinds off is the identity.
struct TransformSpec {
  bool rotation = false;
  double max_degrees = 25.0;
  bool shift = false;
  double max_fraction = 0.1;  // of the image side, or of the sample RMS for vectors
  bool rescale = false;
  double min_scale = 0.9;
  double max_scale = 1.1;
  bool flip = false;  // images only
  double flip_probability = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError for ranges that are empty or out of bounds.
  void validate() const;
  bool is_identity() const { return !rotation && !shift && !rescale && !flip; }

  static TransformSpec identity() { return {}; }
  /// Rotation, shift, rescale and flip with the default ranges.
  static TransformSpec all_default(std::uint64_t seed);
};

/// Parameters drawn for one sample.
struct AppliedTransform {
  double degrees = 0.0;
  double scale = 1.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  bool flipped = false;
  // Vector samples: rotation plane and per-coordinate offsets.
  std::size_t plane_a = 0;
  std::size_t plane_b = 0;
  std::vector<double> offset;
};

struct TransformedBatch {
  Tensor x;
  std::vector<AppliedTransform> applied;
};

/// x is [B, C, H, W] (images) or [B, D] (feature vectors). Sample i draws its
/// parameters from a stream seeded by (spec.seed, i).
///
/// Images are inverse-mapped about their centre with nearest-neighbour lookup
/// and edge-replicate fill. Vectors are rotated in a random coordinate plane,
/// scaled, and offset.
TransformedBatch apply_transform(const Tensor& x, const TransformSpec& spec);

/// Applies explicit per-sample image parameters to [B, C, H, W].
Tensor apply_image_transform(const Tensor& x, const std::vector<AppliedTransform>& params);

struct RobustnessLosses {
  Var pg;        // pseudo-graph loss of the transformed branch
  Var pl;        // pseudo-label loss of the transformed branch
  Var combined;  // pg + alpha * pl
};

/// Supervision computed on the original batch applied to the transformed one.
RobustnessLosses robustness_losses(Var z_t, const SimilarityMatrix& s_t, const PseudoGraph& w,
                                   const PseudoLabels& labels, double alpha);

/// Mean over samples of ||z_i - z'_i||^2.
Var feature_invariance_loss(Var z, Var z_t);

}  // namespace dccm
