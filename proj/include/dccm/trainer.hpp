#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "dccm/config.hpp"
#include "dccm/data_io.hpp"
#include "dccm/evaluation.hpp"
#include "dccm/model.hpp"
#include "dccm/objective.hpp"
#include "dccm/optimizer.hpp"

namespace dccm {

/// One metrics.csv row. Losses are means over the epoch's steps; scores come
/// from a full-dataset evaluation after the epoch (NaN without ground truth).
struct EpochRecord {
  std::uint64_t epoch = 0;
  double loss_total = 0.0;
  double loss_pg = 0.0;
  double loss_pg_t = 0.0;
  double loss_pl = 0.0;
  double loss_pl_t = 0.0;
  double loss_mi = 0.0;
  double nmi = 0.0;
  double acc = 0.0;
  double ari = 0.0;
  double selected_label_frac = 0.0;
  double positive_pair_frac = 0.0;
  std::size_t mi_skipped_steps = 0;
  // BCubed of the training pseudo-graphs at thres1 against the ground truth,
  // averaged over the epoch's minibatches (zero without ground truth).
  double graph_precision = 0.0;
  double graph_recall = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,loss_total,loss_pg,loss_pg_t,loss_pl,loss_pl_t,loss_mi,nmi,acc,ari,selected_label_frac,positive_pair_frac";

std::string format_metrics_row(const EpochRecord& r);

/// The training loop over a fixed dataset: per minibatch, forward the originals,
/// derive graph, labels and pairs from detached predictions, forward the
/// transformed batch, and take one joint RMSprop step on encoder and
/// discriminator.
class Trainer {
 public:
  Trainer(ExperimentConfig config, Dataset data);

  /// Restores parameters, optimizer state, epoch and RNG from a checkpoint.
  /// The checkpoint's embedded config is used; epochs and the output
  /// directory may be overridden.
  static Trainer resume(const std::filesystem::path& checkpoint, Dataset data,
                        std::optional<std::size_t> total_epochs = std::nullopt,
                        std::optional<std::string> output_dir = std::nullopt);

  /// Trains one epoch and evaluates. Throws DivergenceError on a non-finite
  /// loss or gradient; parameters are then left at the last completed step.
  EpochRecord run_epoch();

  /// Runs until config.epochs. With outputs enabled, appends to metrics.csv,
  /// writes bcubed.csv rows, and saves the checkpoint after every epoch.
  std::vector<EpochRecord> run(bool write_outputs = true);

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;

  EvalResult evaluate_now(const std::vector<double>& bcubed_thresholds = {});

  const ExperimentConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  Encoder& encoder() { return encoder_; }
  Discriminator& discriminator() { return disc_; }
  const OptimizerState& optimizer() const { return opt_; }
  std::uint64_t epoch() const { return epoch_; }
  std::size_t num_clusters() const { return num_clusters_; }
  std::uint64_t parameter_checksum() const;

  /// Receives one line per notable event (MI skipped, divergence, epoch summary).
  void set_log(std::ostream* log) { log_ = log; }

 private:
  std::vector<NamedTensor*> all_parameters();
  void write_epoch_outputs(const EpochRecord& rec, const EvalResult& eval);

  ExperimentConfig config_;
  Dataset data_;
  std::size_t num_clusters_ = 0;
  Encoder encoder_;
  Discriminator disc_;
  OptimizerState opt_;
  ObjectiveSettings settings_;
  std::mt19937_64 rng_;
  std::uint64_t epoch_ = 0;
  std::ostream* log_ = nullptr;
  EvalResult last_eval_;
};

/// Rebuilds the encoder stored in a checkpoint for data of the given sample shape.
Encoder encoder_from_checkpoint(const Checkpoint& ckpt, const Shape& sample_shape);

}  // namespace dccm
