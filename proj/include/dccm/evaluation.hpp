#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dccm/data_io.hpp"
#include "dccm/graph_analysis.hpp"
#include "dccm/model.hpp"

namespace dccm {

/// Frozen forward pass over a whole dataset.
struct Predictions {
  Tensor z;            // [N, K]
  Tensor deep;         // [N, D]
  Tensor penultimate;  // [N, P]
  std::vector<std::size_t> labels;  // argmax of z, lowest index on ties
};

Predictions predict(Encoder& encoder, const Dataset& data, std::size_t chunk = 256);

struct ClusterScores {
  double nmi = 0.0;
  double acc = 0.0;
  double ari = 0.0;
};

struct EvalResult {
  Predictions predictions;
  std::optional<ClusterScores> scores;  // absent without ground truth
  double selected_fraction = 0.0;       // share with max probability >= thres2
  ConcentrationHistogram histogram;
  std::vector<BCubedPoint> bcubed;      // empty unless requested and truth is present
};

/// Cluster labels are argmax of the prediction. BCubed is computed on the
/// pseudo-graph over the full dataset at each threshold.
EvalResult evaluate(Encoder& encoder, const Dataset& data, double thres2,
                    const std::vector<double>& bcubed_thresholds = {});

ClusterScores score_labels(const std::vector<std::size_t>& predicted, const GroundTruth& truth);

/// sample_id, d0..d{D-1}, label
void write_embeddings_csv(const std::filesystem::path& path, const Tensor& deep,
                          const std::vector<std::size_t>& labels);

/// threshold, precision, recall
void write_bcubed_csv(const std::filesystem::path& path, const std::vector<BCubedPoint>& curve);

}  // namespace dccm
