#include "dccm/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "dccm/correlation.hpp"
#include "dccm/errors.hpp"
#include "dccm/metrics.hpp"

namespace dccm {

namespace {

void append_rows(std::vector<double>& dst, const Tensor& t) { dst.insert(dst.end(), t.data().begin(), t.data().end()); }

}  // namespace

Predictions predict(Encoder& encoder, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw DegenerateInputError("cannot predict on an empty dataset");
  std::vector<double> z, deep, pen;
  std::size_t k = 0, d = 0, p = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    const EncoderOutput out = encoder.forward(tape, tape.constant(data.batch(idx)), false);
    append_rows(z, out.z.value());
    append_rows(deep, out.deep.value());
    append_rows(pen, out.penultimate.value());
    k = out.z.value().dim(1);
    d = out.deep.value().dim(1);
    p = out.penultimate.value().dim(1);
  }
  const std::size_t n = data.size();
  Predictions r{Tensor({n, k}, std::move(z)), Tensor({n, d}, std::move(deep)), Tensor({n, p}, std::move(pen)), {}};
  r.labels = assign_pseudo_labels(r.z, 0.5).label;
  return r;
}

ClusterScores score_labels(const std::vector<std::size_t>& predicted, const GroundTruth& truth) {
  const Partition pred = Partition::from_labels(predicted);
  const Partition gt = Partition::from_labels(truth.labels);
  return {nmi(pred, gt), hungarian_acc(pred, gt), ari(pred, gt)};
}

EvalResult evaluate(Encoder& encoder, const Dataset& data, double thres2, const std::vector<double>& bcubed_thresholds) {
  EvalResult r;
  r.predictions = predict(encoder, data);
  const PseudoLabels pl = assign_pseudo_labels(r.predictions.z, thres2);
  r.selected_fraction = static_cast<double>(pl.selected_count()) / static_cast<double>(data.size());
  r.histogram = concentration_histogram(r.predictions.z);
  if (data.truth()) {
    r.scores = score_labels(r.predictions.labels, *data.truth());
    if (!bcubed_thresholds.empty()) {
      r.bcubed = bcubed_curve(cosine_similarity_values(r.predictions.z), Partition::from_labels(data.truth()->labels),
                              bcubed_thresholds);
    }
  }
  return r;
}

void write_embeddings_csv(const std::filesystem::path& path, const Tensor& deep,
                          const std::vector<std::size_t>& labels) {
  if (deep.dim(0) != labels.size()) throw DimensionError("embeddings and labels differ in length");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::size_t d = deep.dim(1);
  out << "sample_id";
  for (std::size_t j = 0; j < d; ++j) out << ",d" << j;
  out << ",label\n";
  out.precision(17);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < d; ++j) out << ',' << deep[i * d + j];
    out << ',' << labels[i] << '\n';
  }
}

void write_bcubed_csv(const std::filesystem::path& path, const std::vector<BCubedPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  out << "threshold,precision,recall\n";
  for (const auto& p : curve) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

}  // namespace dccm
