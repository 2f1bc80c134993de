#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "dccm/metrics.hpp"
#include "dccm/tensor.hpp"

namespace dccm {

/// Connected components of the complete weighted graph as the edge threshold
/// rises. Edges survive when weight > t (strict).
struct ThresholdSweep {
  std::size_t nodes = 0;
  std::vector<double> weights;         // sorted distinct off-diagonal weights
  std::vector<double> thresholds;      // -inf, then each weight
  std::vector<std::size_t> components; // per threshold
  std::vector<std::vector<std::size_t>> assignment;  // per threshold, when kept
  bool perturbed = false;              // ties were broken by a tiny index offset

  /// Component count for an arbitrary threshold.
  std::size_t components_at(double t) const;
};

/// weights is a symmetric [N, N] matrix; only the upper triangle is read.
/// Throws DimensionError for a non-square or empty matrix.
ThresholdSweep threshold_partition_sweep(const Tensor& weights, bool keep_assignments = true);

/// Smallest threshold giving exactly K components, or nullopt (only possible
/// after tie perturbation). Throws ContractError unless 1 <= K <= N.
std::optional<double> find_k_partition_threshold(const ThresholdSweep& sweep, std::size_t k);

/// Component labels of the graph keeping edges with weight > t.
std::vector<std::size_t> threshold_components(const Tensor& weights, double t);

struct OneHotReport {
  double fraction = 0.0;
  std::vector<std::uint8_t> one_hot;
};

/// A row counts as one-hot when its largest entry is >= 1 - tol.
OneHotReport verify_one_hot(const Tensor& z, double tol = 0.1);

struct BCubedPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// BCubed of the pseudo-graph built at each threshold against the ground truth.
std::vector<BCubedPoint> bcubed_curve(const Tensor& similarity, const Partition& truth,
                                      const std::vector<double>& thresholds);

/// Adjacent pairs (in threshold order) where precision falls or recall rises.
std::size_t monotonicity_violations(std::vector<BCubedPoint> curve);

/// Counts of max-probability over 0.1-wide bins covering [1/K, 1], the first
/// bin clipped at 1/K.
struct ConcentrationHistogram {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  /// Share of rows with max probability >= p (p on a bin boundary).
  double fraction_at_least(double p) const;
};

ConcentrationHistogram concentration_histogram(const Tensor& z);

}  // namespace dccm
