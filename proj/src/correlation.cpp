#include "dccm/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dccm/errors.hpp"
#include "dccm/ops.hpp"

namespace dccm {

namespace {

void require_nonzero_rows(const Tensor& z) {
  if (z.rank() != 2) throw DimensionError("cosine_similarity expects [B, K], got " + shape_str(z.shape()));
  const std::size_t k = z.dim(1);
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < k && !any; ++j) any = z[i * k + j] != 0.0;
    if (!any) throw DegenerateInputError("cosine_similarity: row " + std::to_string(i) + " has zero norm");
  }
}

}  // namespace

SimilarityMatrix cosine_similarity(Var z) {
  require_nonzero_rows(z.value());
  Var unit = ops::div(z, ops::l2norm(z));
  return {ops::matmul(unit, ops::transpose(unit))};
}

Tensor cosine_similarity_values(const Tensor& z) {
  require_nonzero_rows(z);
  const std::size_t b = z.dim(0), k = z.dim(1);
  Tensor unit(z.shape());
  for (std::size_t i = 0; i < b; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += z[i * k + j] * z[i * k + j];
    const double norm = std::sqrt(acc);
    for (std::size_t j = 0; j < k; ++j) unit[i * k + j] = z[i * k + j] / norm;
  }
  Tensor s({b, b});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += unit[i * k + p] * unit[j * k + p];
      s[i * b + j] = acc;
    }
  }
  return s;
}

PseudoGraph::PseudoGraph(std::size_t n, std::vector<std::uint8_t> w, double thres1)
    : n_(n), w_(std::move(w)), thres1_(thres1) {
  if (w_.size() != n_ * n_) throw DimensionError("pseudo-graph matrix size does not match " + std::to_string(n_));
}

double PseudoGraph::positive_fraction() const {
  if (n_ < 2) return 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) pos += (i != j && w_[i * n_ + j]) ? 1 : 0;
  }
  return static_cast<double>(pos) / static_cast<double>(n_ * (n_ - 1));
}

PseudoGraph build_pseudo_graph(const Tensor& similarity, double thres1) {
  if (!(thres1 > 0.0 && thres1 < 1.0)) throw ContractError("thres1 must lie in (0, 1)");
  if (similarity.rank() != 2 || similarity.dim(0) != similarity.dim(1)) {
    throw DimensionError("pseudo-graph needs a square similarity matrix, got " + shape_str(similarity.shape()));
  }
  const std::size_t n = similarity.dim(0);
  std::vector<std::uint8_t> w(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = (i == j || similarity[i * n + j] >= thres1) ? 1 : 0;
  }
  return PseudoGraph(n, std::move(w), thres1);
}

std::size_t PseudoLabels::selected_count() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), std::uint8_t{1}));
}

PseudoLabels assign_pseudo_labels(const Tensor& z, double thres2) {
  if (!(thres2 > 0.0 && thres2 < 1.0)) throw ContractError("thres2 must lie in (0, 1)");
  if (z.rank() != 2) throw DimensionError("pseudo-labels expect [B, K], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0), k = z.dim(1);
  PseudoLabels out;
  out.thres2 = thres2;
  out.label.resize(b);
  out.confidence.resize(b);
  out.selected.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[i * k + j] > z[i * k + best]) best = j;
    }
    out.label[i] = best;
    out.confidence[i] = z[i * k + best];
    out.selected[i] = out.confidence[i] >= thres2 ? 1 : 0;
  }
  return out;
}

Var pseudo_graph_loss(const SimilarityMatrix& s, const PseudoGraph& w) {
  const Tensor& sv = s.s.value();
  const std::size_t n = w.size();
  if (sv.rank() != 2 || sv.dim(0) != n || sv.dim(1) != n) {
    throw DimensionError("pseudo_graph_loss: similarity " + shape_str(sv.shape()) + " vs graph of " + std::to_string(n));
  }
  if (n < 2) throw DegenerateBatchError("pseudo_graph_loss needs at least 2 samples");
  Tape& tape = *s.s.tape();
  Tensor pos({n, n}, 0.0), neg({n, n}, 0.0), ones({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      (w.edge(i, j) ? pos : neg)[i * n + j] = 1.0;
    }
  }
  Var clamped = ops::clamp(s.s, kLogClampEps, 1.0 - kLogClampEps);
  Var log_s = ops::log(clamped);
  Var log_not_s = ops::log(ops::sub(tape.constant(std::move(ones)), clamped));
  Var ll = ops::add(ops::sum(ops::mul(tape.constant(std::move(pos)), log_s)),
                    ops::sum(ops::mul(tape.constant(std::move(neg)), log_not_s)));
  return ops::scale(ll, -1.0 / static_cast<double>(n * (n - 1)));
}

Var pseudo_label_loss(Var z, const PseudoLabels& labels) {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.dim(0) != labels.size()) {
    throw DimensionError("pseudo_label_loss: predictions " + shape_str(zv.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = zv.dim(0), k = zv.dim(1);
  Tensor mask({b, k}, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels.label[i] >= k) throw DimensionError("pseudo-label out of range");
    if (labels.selected[i]) mask[i * k + labels.label[i]] = 1.0;
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, labels.selected_count()));
  Tape& tape = *z.tape();
  Var log_z = ops::log(ops::clamp(z, kLogClampEps, 1.0 - kLogClampEps));
  return ops::scale(ops::sum(ops::mul(tape.constant(std::move(mask)), log_z)), -1.0 / denom);
}

double combined_sample_loss(double l_pg, double l_pl, double alpha) { return l_pg + alpha * l_pl; }

Var combined_sample_loss(Var l_pg, Var l_pl, double alpha) { return ops::add(l_pg, ops::scale(l_pl, alpha)); }

std::string_view sampling_strategy_name(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::nearest_pos_random_neg: return "nearest-pos+random-neg";
    case SamplingStrategy::nearest_pos_farthest_neg: return "nearest-pos+farthest-neg";
    case SamplingStrategy::random_pos_random_neg: return "random-pos+random-neg";
    case SamplingStrategy::topn_pos_random_neg: return "topn-pos+random-neg";
  }
  return "?";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
  for (auto s : {SamplingStrategy::nearest_pos_random_neg, SamplingStrategy::nearest_pos_farthest_neg,
                 SamplingStrategy::random_pos_random_neg, SamplingStrategy::topn_pos_random_neg}) {
    if (sampling_strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown sampling strategy '" + std::string(name) + "'");
}

TripletBatch sample_triplet_pairs(const PseudoGraph& w, const Tensor& similarity, SamplingStrategy strategy,
                                  std::size_t n, std::uint64_t seed) {
  const std::size_t b = w.size();
  if (similarity.rank() != 2 || similarity.dim(0) != b || similarity.dim(1) != b) {
    throw DimensionError("sample_triplet_pairs: similarity does not match the graph");
  }
  if (n == 0 || n > b) throw ContractError("sample_triplet_pairs: need 1 <= n <= batch size");
  std::mt19937_64 gen(seed);
  auto pick = [&gen](const std::vector<std::size_t>& from) {
    std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
    return from[d(gen)];
  };
  auto sim = [&](std::size_t i, std::size_t j) { return similarity[i * b + j]; };

  std::vector<std::size_t> anchors(b);
  std::iota(anchors.begin(), anchors.end(), 0);
  if (n < b) {
    std::shuffle(anchors.begin(), anchors.end(), gen);
    anchors.resize(n);
  }

  TripletBatch out;
  auto negative_for = [&](std::size_t i, std::size_t& neg) {
    std::vector<std::size_t> cands;
    for (std::size_t j = 0; j < b; ++j) {
      if (!w.edge(i, j)) cands.push_back(j);
    }
    if (cands.empty()) return false;
    if (strategy == SamplingStrategy::nearest_pos_farthest_neg) {
      neg = cands.front();
      for (auto j : cands) {
        if (sim(i, j) < sim(i, neg)) neg = j;
      }
    } else {
      neg = pick(cands);
    }
    return true;
  };

  if (strategy == SamplingStrategy::topn_pos_random_neg) {
    std::vector<FeaturePair> ranked;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = i + 1; j < b; ++j) {
        if (w.edge(i, j)) ranked.push_back({i, j});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](const FeaturePair& x, const FeaturePair& y) {
      return sim(x.deep, x.shallow) > sim(y.deep, y.shallow);
    });
    if (ranked.size() > n) ranked.resize(n);
    // Too few cross-sample positives: fill with self-pairs.
    for (std::size_t k = 0; ranked.size() < n; ++k) ranked.push_back({anchors[k], anchors[k]});
    for (const auto& p : ranked) {
      std::size_t neg = 0;
      if (!negative_for(p.deep, neg)) {
        ++out.skipped_anchors;
        continue;
      }
      out.joint.push_back(p);
      out.marginal.push_back({p.deep, neg});
    }
  } else {
    for (std::size_t i : anchors) {
      std::size_t neg = 0;
      if (!negative_for(i, neg)) {
        ++out.skipped_anchors;
        continue;
      }
      std::size_t pos = i;
      if (strategy == SamplingStrategy::random_pos_random_neg) {
        std::vector<std::size_t> cands;
        for (std::size_t j = 0; j < b; ++j) {
          if (w.edge(i, j)) cands.push_back(j);
        }
        pos = pick(cands);
      } else {
        bool found = false;
        for (std::size_t j = 0; j < b; ++j) {
          if (j == i || !w.edge(i, j)) continue;
          if (!found || sim(i, j) > sim(i, pos)) pos = j;
          found = true;
        }
      }
      out.joint.push_back({i, pos});
      out.marginal.push_back({i, neg});
    }
  }
  if (out.joint.empty() || out.marginal.empty()) {
    throw DegenerateBatchError("no anchor in the batch has a negative pair (pseudo-graph is complete)");
  }
  return out;
}

Var triplet_mi_loss(Discriminator& disc, Var deep, Var shallow, const TripletBatch& pairs, bool trainable) {
  if (pairs.joint.empty() || pairs.marginal.empty()) {
    throw DegenerateBatchError("triplet_mi_loss needs joint and marginal pairs");
  }
  auto scores = [&](const std::vector<FeaturePair>& ps) {
    std::vector<std::size_t> di, si;
    for (const auto& p : ps) {
      di.push_back(p.deep);
      si.push_back(p.shallow);
    }
    return disc.score(*deep.tape(), ops::select_rows(deep, std::move(di)), ops::select_rows(shallow, std::move(si)),
                      trainable);
  };
  Var joint = scores(pairs.joint);
  Var marginal = scores(pairs.marginal);
  // -(E_J[-sp(-T)] - E_M[sp(T)])
  return ops::add(ops::mean(ops::softplus(ops::scale(joint, -1.0))), ops::mean(ops::softplus(marginal)));
}

double total_loss(const LossBreakdown& p) {
  const std::pair<const char*, double> parts[] = {{"l_pg", p.l_pg}, {"l_pg_prime", p.l_pg_prime}, {"l_pl", p.l_pl},
                                                  {"l_pl_prime", p.l_pl_prime}, {"l_mi", p.l_mi}, {"l_fi", p.l_fi}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw DivergenceError(std::string("loss component ") + name + " is not finite");
  }
  return (p.l_pg + p.l_pg_prime) + p.alpha * (p.l_pl + p.l_pl_prime) + p.beta * p.l_mi + p.gamma * p.l_fi;
}

}  // namespace dccm
