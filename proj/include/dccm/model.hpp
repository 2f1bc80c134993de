#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dccm/ops.hpp"
#include "dccm/tape.hpp"
#include "dccm/tensor.hpp"

namespace dccm {

enum class LayerKind { conv, maxpool, avgpool, linear, relu, affine };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;  // output channels (conv) or features (linear)
  std::size_t kernel = 3;
  std::size_t stride = 0;  // pooling only; 0 means stride == kernel
  bool same_padding = true;
};

/// Encoder layout. The softmax after the final linear layer is implicit.
struct EncoderConfig {
  Shape input_shape;  // per sample: [C, H, W] for images, [D] for vectors
  std::vector<LayerSpec> layers;
  std::size_t shallow_tap = 0;
  std::size_t deep_tap = 0;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on broken tap ordering, a final layer other than
  /// linear(num_classes), or layer/shape combinations that cannot run.
  void validate() const;
  /// Per-sample output shape of every layer.
  std::vector<Shape> layer_shapes() const;

  /// conv3x3(16)+affine+relu, maxpool2, conv3x3(32)+affine+relu (shallow tap),
  /// maxpool2, linear(64)+relu (deep tap), linear(K).
  static EncoderConfig conv_default(Shape input_shape, std::size_t num_classes, std::uint64_t seed);
  /// linear(hidden)+relu (shallow tap), linear(hidden)+relu (deep tap), linear(K).
  static EncoderConfig mlp_default(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed,
                                   std::size_t hidden = 64);
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Scaled uniform fill in +-sqrt(6 / (fan_in + fan_out)).
void scaled_uniform_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

struct EncoderOutput {
  Var z;             // [B, K] softmax prediction
  Var logits;        // [B, K]
  Var deep;          // [B, D] flattened deep tap
  Var shallow;       // [B, S] flattened shallow tap
  Var penultimate;   // [B, P] flattened input of the final linear layer
};

/// The clustering network f_theta with its parameters.
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }

  /// batch is [B, input_shape...]. With trainable == false the parameters are
  /// read as constants and receive no gradient.
  EncoderOutput forward(Tape& tape, Var batch, bool trainable = true);

  std::size_t deep_width() const;
  std::size_t shallow_width() const;
  std::size_t penultimate_width() const;

  /// Order-sensitive FNV-1a hash over every parameter bit pattern.
  std::uint64_t checksum() const;

 private:
  EncoderConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<std::size_t>> layer_params_;  // indices into params_ per layer
};

/// Scores (deep, shallow) feature pairs with a three-layer map on their
/// concatenation: linear(h)+relu, linear(h)+relu, linear(1).
class Discriminator {
 public:
  Discriminator(std::size_t deep_width, std::size_t shallow_width, std::size_t hidden, std::uint64_t seed,
                bool zero_final_layer = false);

  /// One score per row pair; result shape [B].
  Var score(Tape& tape, Var deep, Var shallow, bool trainable = true);

  std::size_t deep_width() const { return deep_width_; }
  std::size_t shallow_width() const { return shallow_width_; }
  std::size_t hidden() const { return hidden_; }
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }

 private:
  std::size_t deep_width_;
  std::size_t shallow_width_;
  std::size_t hidden_;
  std::vector<NamedTensor> params_;
};

Encoder init_params(const EncoderConfig& config, std::uint64_t seed);

std::uint64_t checksum(const std::vector<NamedTensor>& params);

}  // namespace dccm
