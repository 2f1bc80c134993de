#include "dccm/graph_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dccm/correlation.hpp"
#include "dccm/errors.hpp"

namespace dccm {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1), count_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    --count_;
  }

  std::size_t count() const { return count_; }

  std::vector<std::size_t> labels() {
    std::vector<std::size_t> root_label(parent_.size(), parent_.size());
    std::vector<std::size_t> out(parent_.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < parent_.size(); ++i) {
      const std::size_t r = find(i);
      if (root_label[r] == parent_.size()) root_label[r] = next++;
      out[i] = root_label[r];
    }
    return out;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::size_t count_;
};

struct Edge {
  std::size_t i;
  std::size_t j;
  double w;
};

std::vector<Edge> upper_edges(const Tensor& weights) {
  if (weights.rank() != 2 || weights.dim(0) != weights.dim(1)) {
    throw DimensionError("weight matrix must be square, got " + shape_str(weights.shape()));
  }
  const std::size_t n = weights.dim(0);
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, weights[i * n + j]});
  }
  return edges;
}

bool has_ties(const std::vector<Edge>& sorted) {
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].w == sorted[k - 1].w) return true;
  }
  return false;
}

}  // namespace

std::size_t ThresholdSweep::components_at(double t) const {
  const auto idx = static_cast<std::size_t>(std::upper_bound(weights.begin(), weights.end(), t) - weights.begin());
  return components[idx];
}

ThresholdSweep threshold_partition_sweep(const Tensor& weights, bool keep_assignments) {
  std::vector<Edge> edges = upper_edges(weights);
  ThresholdSweep sweep;
  sweep.nodes = weights.dim(0);
  auto by_weight = [](const Edge& a, const Edge& b) { return a.w < b.w; };
  std::stable_sort(edges.begin(), edges.end(), by_weight);
  if (has_ties(edges)) {
    // Break ties by enumeration order so every weight is distinct.
    std::vector<Edge> ordered = upper_edges(weights);
    for (std::size_t k = 0; k < ordered.size(); ++k) ordered[k].w += 1e-12 * static_cast<double>(k);
    edges = std::move(ordered);
    std::stable_sort(edges.begin(), edges.end(), by_weight);
    sweep.perturbed = true;
  }

  const std::size_t m = edges.size();
  sweep.weights.resize(m);
  for (std::size_t k = 0; k < m; ++k) sweep.weights[k] = edges[k].w;
  sweep.thresholds.push_back(-std::numeric_limits<double>::infinity());
  sweep.thresholds.insert(sweep.thresholds.end(), sweep.weights.begin(), sweep.weights.end());
  sweep.components.assign(m + 1, 0);
  if (keep_assignments) sweep.assignment.assign(m + 1, {});

  // Threshold index k keeps edges[k..m); add edges from the heaviest down.
  DisjointSets dsu(sweep.nodes);
  for (std::size_t k = m + 1; k-- > 0;) {
    if (k < m) dsu.unite(edges[k].i, edges[k].j);
    sweep.components[k] = dsu.count();
    if (keep_assignments) sweep.assignment[k] = dsu.labels();
  }
  return sweep;
}

std::optional<double> find_k_partition_threshold(const ThresholdSweep& sweep, std::size_t k) {
  if (k < 1 || k > sweep.nodes) {
    throw ContractError("K = " + std::to_string(k) + " outside [1, " + std::to_string(sweep.nodes) + "]");
  }
  for (std::size_t idx = 0; idx < sweep.thresholds.size(); ++idx) {
    if (sweep.components[idx] == k) return sweep.thresholds[idx];
  }
  return std::nullopt;
}

std::vector<std::size_t> threshold_components(const Tensor& weights, double t) {
  const std::vector<Edge> edges = upper_edges(weights);
  DisjointSets dsu(weights.dim(0));
  for (const Edge& e : edges) {
    if (e.w > t) dsu.unite(e.i, e.j);
  }
  return dsu.labels();
}

OneHotReport verify_one_hot(const Tensor& z, double tol) {
  if (z.rank() != 2) throw DimensionError("verify_one_hot expects [B, K], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0), k = z.dim(1);
  OneHotReport out;
  out.one_hot.resize(b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.data().data() + i * k;
    const double top = *std::max_element(row, row + k);
    out.one_hot[i] = top >= 1.0 - tol ? 1 : 0;
    hits += out.one_hot[i];
  }
  out.fraction = static_cast<double>(hits) / static_cast<double>(b);
  return out;
}

std::vector<BCubedPoint> bcubed_curve(const Tensor& similarity, const Partition& truth,
                                      const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ContractError("bcubed_curve needs at least one threshold");
  std::vector<BCubedPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const PseudoGraph g = build_pseudo_graph(similarity, t);
    const BCubed b = bcubed(g.matrix(), truth);
    out.push_back({t, b.precision, b.recall});
  }
  return out;
}

std::size_t monotonicity_violations(std::vector<BCubedPoint> curve) {
  std::stable_sort(curve.begin(), curve.end(),
                   [](const BCubedPoint& a, const BCubedPoint& b) { return a.threshold < b.threshold; });
  std::size_t bad = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k].precision < curve[k - 1].precision) ++bad;
    if (curve[k].recall > curve[k - 1].recall) ++bad;
  }
  return bad;
}

std::size_t ConcentrationHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double ConcentrationHistogram::fraction_at_least(double p) const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (lower[b] >= p - 1e-12) hits += counts[b];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

ConcentrationHistogram concentration_histogram(const Tensor& z) {
  if (z.rank() != 2) throw DimensionError("concentration_histogram expects [B, K], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0), k = z.dim(1);
  const std::size_t first = std::min<std::size_t>(10 / k, 9);
  ConcentrationHistogram h;
  for (std::size_t bin = first; bin < 10; ++bin) {
    h.lower.push_back(bin == first ? std::max(0.1 * static_cast<double>(bin), 1.0 / static_cast<double>(k))
                                   : 0.1 * static_cast<double>(bin));
    h.upper.push_back(0.1 * static_cast<double>(bin + 1));
  }
  h.counts.assign(h.lower.size(), 0);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.data().data() + i * k;
    const double top = *std::max_element(row, row + k);
    const auto raw = static_cast<std::size_t>(std::clamp(std::floor(top * 10.0), 0.0, 9.0));
    ++h.counts[std::max(raw, first) - first];
  }
  return h;
}

}  // namespace dccm
