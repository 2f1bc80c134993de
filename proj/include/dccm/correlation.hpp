#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dccm/model.hpp"
#include "dccm/tape.hpp"

namespace dccm {

/// Clamp applied to every log argument in the supervision losses.
inline constexpr double kLogClampEps = 1e-7;

/// Differentiable [B, B] cosine similarities of prediction rows.
struct SimilarityMatrix {
  Var s;
};

/// Throws DegenerateInputError for a zero-norm row.
SimilarityMatrix cosine_similarity(Var z);
/// Detached evaluation of the same quantity.
Tensor cosine_similarity_values(const Tensor& z);

/// Binary co-membership relation over a minibatch; W_ij = 1 iff S_ij >= thres1.
class PseudoGraph {
 public:
  PseudoGraph(std::size_t n, std::vector<std::uint8_t> w, double thres1);

  std::size_t size() const { return n_; }
  bool edge(std::size_t i, std::size_t j) const { return w_[i * n_ + j] != 0; }
  double thres1() const { return thres1_; }
  const std::vector<std::uint8_t>& matrix() const { return w_; }
  /// Share of ordered off-diagonal pairs marked positive.
  double positive_fraction() const;

 private:
  std::size_t n_;
  std::vector<std::uint8_t> w_;
  double thres1_;
};

PseudoGraph build_pseudo_graph(const Tensor& similarity, double thres1);

struct PseudoLabels {
  std::vector<std::size_t> label;   // argmax, lowest index on ties
  std::vector<double> confidence;   // max probability
  std::vector<std::uint8_t> selected;
  double thres2 = 0.0;

  std::size_t size() const { return label.size(); }
  std::size_t selected_count() const;
};

PseudoLabels assign_pseudo_labels(const Tensor& z, double thres2);

/// Mean binary cross-entropy between clamped similarities and the graph over
/// ordered off-diagonal pairs.
Var pseudo_graph_loss(const SimilarityMatrix& s, const PseudoGraph& w);

/// Cross-entropy at the pseudo-label of each selected sample, normalised by
/// max(1, number selected).
Var pseudo_label_loss(Var z, const PseudoLabels& labels);

double combined_sample_loss(double l_pg, double l_pl, double alpha);
Var combined_sample_loss(Var l_pg, Var l_pl, double alpha);

enum class SamplingStrategy {
  nearest_pos_random_neg,
  nearest_pos_farthest_neg,
  random_pos_random_neg,
  topn_pos_random_neg,
};

std::string_view sampling_strategy_name(SamplingStrategy s);
SamplingStrategy parse_sampling_strategy(std::string_view name);

struct FeaturePair {
  std::size_t deep;     // row of the deep feature
  std::size_t shallow;  // row of the shallow feature
};

struct TripletBatch {
  std::vector<FeaturePair> joint;     // W_ij = 1, self-pairs allowed
  std::vector<FeaturePair> marginal;  // W_ij = 0
  std::size_t skipped_anchors = 0;    // anchors without an available negative
};

/// Draws n positive and n negative pairs anchored on the same samples.
/// Throws DegenerateBatchError if no anchor has a negative.
TripletBatch sample_triplet_pairs(const PseudoGraph& w, const Tensor& similarity, SamplingStrategy strategy,
                                  std::size_t n, std::uint64_t seed);

/// Negated JSD mutual-information estimate over joint and marginal pairs:
/// mean sp(-T) over joint + mean sp(T) over marginal.
Var triplet_mi_loss(Discriminator& disc, Var deep, Var shallow, const TripletBatch& pairs, bool trainable = true);

struct LossBreakdown {
  double l_pg = 0.0;
  double l_pg_prime = 0.0;
  double l_pl = 0.0;
  double l_pl_prime = 0.0;
  double l_mi = 0.0;
  double l_fi = 0.0;  // optional feature-invariance term
  double alpha = 5.0;
  double beta = 0.1;
  double gamma = 0.0;  // weight of l_fi
  double total = 0.0;
};

/// (l_pg + l_pg') + alpha (l_pl + l_pl') + beta l_mi (+ gamma l_fi).
/// Throws DivergenceError naming the first non-finite component.
double total_loss(const LossBreakdown& parts);

}  // namespace dccm
