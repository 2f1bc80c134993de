#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dccm/correlation.hpp"
#include "dccm/data_io.hpp"
#include "dccm/model.hpp"
#include "dccm/robustness.hpp"

namespace dccm {

struct DatasetSpec {
  std::string kind = "blobs";  // "blobs", "cifar" or "file"
  BlobParams blobs;
  std::vector<std::string> paths;     // cifar batches or one DTNS file
  std::vector<std::size_t> classes;   // cifar subset; empty keeps all
  std::size_t max_per_class = 0;      // 0 keeps all
  bool standardize = false;
};

struct EncoderSpec {
  std::string kind = "auto";  // "auto" (conv for images, mlp for vectors), "mlp", "conv" or "custom"
  std::size_t hidden = 64;    // mlp width
  std::vector<LayerSpec> layers;  // custom only
  std::size_t shallow_tap = 0;
  std::size_t deep_tap = 0;
};

/// Which terms of the objective are active. The four ablation rows:
/// M1 graph loss only, M2 adds the transformed branch, M3 adds pseudo-labels,
/// M4 adds mutual information.
struct LossToggles {
  bool use_robustness = true;
  bool use_pseudo_label = true;
  bool use_mi = true;
  bool use_feature_invariance = false;

  static LossToggles ablation(int row);
};

struct ExperimentConfig {
  DatasetSpec dataset;
  EncoderSpec encoder;
  std::size_t num_clusters = 0;  // 0 takes the class count of the ground truth
  double thres1 = 0.95;
  double thres2 = 0.9;
  double alpha = 5.0;
  double beta = 0.1;
  double gamma = 1.0;  // feature-invariance weight, used only when toggled on
  double learning_rate = 1e-4;
  double rmsprop_decay = 0.99;
  double rmsprop_epsilon = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  TransformSpec transform = TransformSpec::all_default(0);
  SamplingStrategy sampling = SamplingStrategy::nearest_pos_random_neg;
  std::size_t mi_pairs = 0;  // 0 uses the batch size
  std::size_t discriminator_hidden = 128;
  LossToggles toggles;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::vector<double> bcubed_thresholds{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  std::size_t bcubed_every = 10;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  std::string to_json() const;
  /// Unknown keys are rejected.
  static ExperimentConfig from_json(const std::string& text);
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Loads (or generates) the dataset described by spec.
Dataset load_experiment_data(const DatasetSpec& spec);

/// Encoder layout for the configured kind and the data's sample shape.
EncoderConfig make_encoder_config(const ExperimentConfig& config, const Shape& sample_shape,
                                  std::size_t num_clusters);

}  // namespace dccm
