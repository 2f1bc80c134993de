#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dccm/model.hpp"
#include "dccm/tensor.hpp"

namespace dccm {

/// Class labels for evaluation. Kept out of every loss signature: the losses
/// only take tensors and pseudo-supervision.
struct GroundTruth {
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
};

struct Normalization {
  std::string kind = "none";  // "none", "unit-range" or "standardized"
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Immutable collection of N samples of a common shape.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, Shape sample_shape, std::vector<double> values, std::optional<GroundTruth> truth);

  const std::string& name() const { return name_; }
  std::size_t size() const { return count_; }
  const Shape& sample_shape() const { return sample_shape_; }
  std::size_t sample_size() const { return shape_numel(sample_shape_); }
  const std::vector<double>& values() const { return values_; }
  const std::optional<GroundTruth>& truth() const { return truth_; }
  const Normalization& normalization() const { return normalization_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// [indices.size(), sample_shape...]
  Tensor batch(std::span<const std::size_t> indices) const;
  /// Every sample as one tensor; throws DegenerateInputError when empty.
  Tensor all() const;

  /// Samples (and labels) at the given indices, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Per-feature (vectors) or per-channel (images) zero mean, unit variance.
  Dataset standardized() const;

  void set_normalization(Normalization n) { normalization_ = std::move(n); }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  std::string name_;
  Shape sample_shape_;
  std::size_t count_ = 0;
  std::vector<double> values_;
  std::optional<GroundTruth> truth_;
  Normalization normalization_;
  std::vector<std::string> warnings_;
};

/// Records of 1 label byte + 3072 bytes (R, G, B planes of 32x32). Pixels are
/// scaled to [0, 1]. Throws FormatError naming the offending byte offset.
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths);

/// Up to max_per_class samples of each listed class, in file order, with the
/// labels compacted to 0..classes.size()-1.
Dataset select_classes(const Dataset& data, const std::vector<std::size_t>& classes, std::size_t max_per_class);

struct BlobParams {
  std::size_t k = 4;
  std::size_t per_cluster = 100;
  std::size_t dim = 16;
  double separation = 10.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters whose centres are pairwise >= separation apart.
Dataset generate_blobs(const BlobParams& params);

/// Shuffled permutation of [0, n) in chunks of batch_size; a final chunk
/// smaller than 2 is dropped. Throws ContractError unless 2 <= batch_size <= n.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string config_json;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> optimizer_state;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

/// Writes to a temporary sibling and renames, so a failed write leaves the
/// previous file intact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// "DTNS", u32 rank, u64 dims, little-endian f64 payload.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Writes samples to path and, when present, labels to path + ".labels".
void write_dataset(const std::filesystem::path& path, const Dataset& data);
/// A ".bin" path is read as CIFAR binary; anything else as a DTNS tensor with
/// an optional ".labels" sibling.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dccm
