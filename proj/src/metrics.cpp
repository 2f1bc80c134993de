#include "dccm/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "dccm/errors.hpp"

namespace dccm {

Partition::Partition(std::vector<std::size_t> assignment, std::size_t num_clusters)
    : assignment_(std::move(assignment)), num_clusters_(num_clusters) {
  std::vector<bool> seen(num_clusters_, false);
  for (std::size_t id : assignment_) {
    if (id >= num_clusters_) {
      throw ContractError("cluster id " + std::to_string(id) + " outside [0, " + std::to_string(num_clusters_) + ")");
    }
    seen[id] = true;
  }
  for (std::size_t k = 0; k < num_clusters_; ++k) {
    if (!seen[k]) throw ContractError("cluster " + std::to_string(k) + " is empty");
  }
}

Partition Partition::from_labels(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], remap.size());
    out[i] = it->second;
  }
  return Partition(std::move(out), remap.size());
}

ContingencyTable contingency(const Partition& pred, const Partition& truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("partitions of " + std::to_string(pred.size()) + " and " + std::to_string(truth.size()) +
                         " items");
  }
  ContingencyTable t;
  t.rows = pred.num_clusters();
  t.cols = truth.num_clusters();
  t.c.assign(t.rows * t.cols, 0);
  t.a.assign(t.rows, 0);
  t.b.assign(t.cols, 0);
  t.n = pred.size();
  for (std::size_t i = 0; i < t.n; ++i) {
    ++t.c[pred[i] * t.cols + truth[i]];
    ++t.a[pred[i]];
    ++t.b[truth[i]];
  }
  return t;
}

namespace {

double entropy(const std::vector<std::size_t>& counts, double n) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

// Same blocks up to relabeling: every row and column has exactly one non-zero.
bool same_partition(const ContingencyTable& t) {
  if (t.rows != t.cols) return false;
  for (std::size_t i = 0; i < t.rows; ++i) {
    std::size_t nz = 0;
    for (std::size_t j = 0; j < t.cols; ++j) nz += t.at(i, j) > 0 ? 1 : 0;
    if (nz != 1) return false;
  }
  return true;
}

double choose2(std::size_t x) { return static_cast<double>(x) * (static_cast<double>(x) - 1.0) / 2.0; }

}  // namespace

double nmi(const Partition& pred, const Partition& truth) {
  const ContingencyTable t = contingency(pred, truth);
  if (t.n == 0) throw DegenerateInputError("nmi of empty partitions");
  const double n = static_cast<double>(t.n);
  const double hp = entropy(t.a, n), ht = entropy(t.b, n);
  if (hp == 0.0 || ht == 0.0) return same_partition(t) ? 1.0 : 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t j = 0; j < t.cols; ++j) {
      const std::size_t c = t.at(i, j);
      if (c == 0) continue;
      mi += (static_cast<double>(c) / n) *
            std::log(n * static_cast<double>(c) / (static_cast<double>(t.a[i]) * static_cast<double>(t.b[j])));
    }
  }
  return mi / std::sqrt(hp * ht);
}

double ari(const Partition& pred, const Partition& truth) {
  const ContingencyTable t = contingency(pred, truth);
  if (t.n < 2) return 1.0;
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t c : t.c) index += choose2(c);
  for (std::size_t x : t.a) sa += choose2(x);
  for (std::size_t x : t.b) sb += choose2(x);
  const double expected = sa * sb / choose2(t.n);
  const double denom = 0.5 * (sa + sb) - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("assignment cost must be n x n");
  // Shortest augmenting path with row/column potentials, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

double hungarian_acc(const Partition& pred, const Partition& truth) {
  const ContingencyTable t = contingency(pred, truth);
  if (t.n == 0) throw DegenerateInputError("hungarian_acc of empty partitions");
  const std::size_t m = std::max(t.rows, t.cols);
  std::vector<double> cost(m * m, 0.0);
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t j = 0; j < t.cols; ++j) cost[i * m + j] = -static_cast<double>(t.at(i, j));
  }
  const auto assign = solve_assignment(cost, m);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < t.rows; ++i) {
    if (assign[i] < t.cols) correct += t.at(i, assign[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(t.n);
}

BCubed bcubed(const std::vector<std::uint8_t>& relation, const Partition& truth) {
  const std::size_t n = truth.size();
  if (relation.size() != n * n) throw DimensionError("bcubed: relation does not cover " + std::to_string(n) + " items");
  if (n == 0) throw DegenerateInputError("bcubed of an empty item set");
  std::vector<std::size_t> class_size(truth.num_clusters(), 0);
  for (std::size_t i = 0; i < n; ++i) ++class_size[truth[i]];
  BCubed out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!relation[i * n + i]) throw ContractError("bcubed: item " + std::to_string(i) + " is not related to itself");
    std::size_t related = 0, correct = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!relation[i * n + j]) continue;
      ++related;
      if (truth[i] == truth[j]) ++correct;
    }
    out.precision += static_cast<double>(correct) / static_cast<double>(related);
    out.recall += static_cast<double>(correct) / static_cast<double>(class_size[truth[i]]);
  }
  out.precision /= static_cast<double>(n);
  out.recall /= static_cast<double>(n);
  return out;
}

BCubed bcubed(const Partition& pred, const Partition& truth) {
  if (pred.size() != truth.size()) throw DimensionError("bcubed: partitions differ in length");
  const std::size_t n = pred.size();
  std::vector<std::uint8_t> rel(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) rel[i * n + j] = pred[i] == pred[j] ? 1 : 0;
  }
  return bcubed(rel, truth);
}

}  // namespace dccm
