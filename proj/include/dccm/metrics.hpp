#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dccm {

/// Assignment of N items to clusters 0..num_clusters-1, each cluster non-empty.
class Partition {
 public:
  /// Throws ContractError if an id is out of range or a cluster is empty.
  Partition(std::vector<std::size_t> assignment, std::size_t num_clusters);

  /// Relabels arbitrary ids to 0.. in order of first appearance.
  static Partition from_labels(const std::vector<std::size_t>& labels);

  std::size_t size() const { return assignment_.size(); }
  std::size_t num_clusters() const { return num_clusters_; }
  std::size_t operator[](std::size_t i) const { return assignment_[i]; }
  const std::vector<std::size_t>& assignment() const { return assignment_; }

 private:
  std::vector<std::size_t> assignment_;
  std::size_t num_clusters_;
};

/// r x s co-occurrence counts between two partitions of the same items.
struct ContingencyTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> c;  // row-major
  std::vector<std::size_t> a;  // row sums
  std::vector<std::size_t> b;  // column sums
  std::size_t n = 0;

  std::size_t at(std::size_t i, std::size_t j) const { return c[i * cols + j]; }
};

/// Throws DimensionError on a length mismatch.
ContingencyTable contingency(const Partition& pred, const Partition& truth);

/// Natural-log mutual information over the geometric mean of the entropies.
/// When an entropy is zero: 1 if the partitions agree up to relabeling, else 0.
double nmi(const Partition& pred, const Partition& truth);

/// Adjusted Rand index; 1 when the denominator vanishes.
double ari(const Partition& pred, const Partition& truth);

/// Accuracy under the best one-to-one cluster-to-class mapping. The
/// co-occurrence matrix is padded with zeros to square.
double hungarian_acc(const Partition& pred, const Partition& truth);

/// Minimum-cost perfect assignment on an n x n matrix; returns the column
/// assigned to each row.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

struct BCubed {
  double precision = 0.0;
  double recall = 0.0;
};

/// Relation-based BCubed. relation is n x n row-major and must contain every
/// self-pair.
BCubed bcubed(const std::vector<std::uint8_t>& relation, const Partition& truth);
BCubed bcubed(const Partition& pred, const Partition& truth);

}  // namespace dccm
