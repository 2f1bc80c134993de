#include "dccm/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "dccm/errors.hpp"
#include "dccm/rng.hpp"

namespace dccm {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::affine: return "affine";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool, LayerKind::avgpool, LayerKind::linear, LayerKind::relu,
                 LayerKind::affine}) {
    if (layer_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

std::vector<Shape> EncoderConfig::layer_shapes() const {
  if (input_shape.empty()) throw ConfigError("encoder input shape is empty");
  for (auto e : input_shape) {
    if (e == 0) throw ConfigError("encoder input shape has a zero extent");
  }
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) throw ConfigError(where + " needs a [C,H,W] input, got " + shape_str(cur));
        if (l.units == 0 || l.kernel == 0) throw ConfigError(where + " needs positive units and kernel");
        if (l.same_padding && l.kernel % 2 == 0) throw ConfigError(where + ": same padding needs an odd kernel");
        const std::size_t pad = l.same_padding ? (l.kernel - 1) / 2 : 0;
        if (cur[1] + 2 * pad < l.kernel || cur[2] + 2 * pad < l.kernel) {
          throw ConfigError(where + ": kernel larger than input " + shape_str(cur));
        }
        cur = {l.units, cur[1] + 2 * pad - l.kernel + 1, cur[2] + 2 * pad - l.kernel + 1};
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        if (cur.size() != 3) throw ConfigError(where + " needs a [C,H,W] input, got " + shape_str(cur));
        const std::size_t stride = l.stride == 0 ? l.kernel : l.stride;
        if (l.kernel == 0 || cur[1] < l.kernel || cur[2] < l.kernel) {
          throw ConfigError(where + ": window does not fit input " + shape_str(cur));
        }
        cur = {cur[0], (cur[1] - l.kernel) / stride + 1, (cur[2] - l.kernel) / stride + 1};
        break;
      }
      case LayerKind::linear:
        if (l.units == 0) throw ConfigError(where + " needs positive units");
        cur = {l.units};
        break;
      case LayerKind::relu:
      case LayerKind::affine:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void EncoderConfig::validate() const {
  if (num_classes < 2) throw ConfigError("encoder needs at least 2 classes");
  if (layers.empty()) throw ConfigError("encoder has no layers");
  const LayerSpec& last = layers.back();
  if (last.kind != LayerKind::linear || last.units != num_classes) {
    throw ConfigError("final encoder layer must be linear(" + std::to_string(num_classes) + ")");
  }
  const std::size_t final_index = layers.size() - 1;
  if (!(shallow_tap < deep_tap && deep_tap < final_index)) {
    throw ConfigError("tap ordering violated: need shallow_tap < deep_tap < " + std::to_string(final_index) +
                      ", got " + std::to_string(shallow_tap) + " / " + std::to_string(deep_tap));
  }
  (void)layer_shapes();
}

EncoderConfig EncoderConfig::conv_default(Shape input_shape, std::size_t num_classes, std::uint64_t seed) {
  EncoderConfig c;
  c.input_shape = std::move(input_shape);
  c.layers = {
      {LayerKind::conv, 16, 3, 0, true},  {LayerKind::affine}, {LayerKind::relu}, {LayerKind::maxpool, 0, 2, 2, false},
      {LayerKind::conv, 32, 3, 0, true},  {LayerKind::affine}, {LayerKind::relu}, {LayerKind::maxpool, 0, 2, 2, false},
      {LayerKind::linear, 64},            {LayerKind::relu},   {LayerKind::linear, num_classes},
  };
  c.shallow_tap = 6;
  c.deep_tap = 9;
  c.num_classes = num_classes;
  c.seed = seed;
  return c;
}

EncoderConfig EncoderConfig::mlp_default(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed,
                                         std::size_t hidden) {
  EncoderConfig c;
  c.input_shape = {input_dim};
  c.layers = {
      {LayerKind::linear, hidden}, {LayerKind::relu}, {LayerKind::linear, hidden}, {LayerKind::relu},
      {LayerKind::linear, num_classes},
  };
  c.shallow_tap = 1;
  c.deep_tap = 3;
  c.num_classes = num_classes;
  c.seed = seed;
  return c;
}

void scaled_uniform_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(gen);
}

std::uint64_t checksum(const std::vector<NamedTensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    for (double v : p.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto shapes = config_.layer_shapes();
  layer_params_.resize(config_.layers.size());
  Shape in = config_.input_shape;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const LayerSpec& l = config_.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto add = [&](std::string name, Tensor t) {
      layer_params_[i].push_back(params_.size());
      params_.push_back({prefix + name, std::move(t)});
    };
    const std::uint64_t layer_seed = mix_seed(config_.seed, i);
    switch (l.kind) {
      case LayerKind::conv: {
        Tensor w({l.units, in[0], l.kernel, l.kernel});
        scaled_uniform_fill(w, in[0] * l.kernel * l.kernel, l.units * l.kernel * l.kernel, layer_seed);
        add("weight", std::move(w));
        add("bias", Tensor({l.units}, 0.0));
        break;
      }
      case LayerKind::linear: {
        const std::size_t fan_in = shape_numel(in);
        Tensor w({l.units, fan_in});
        scaled_uniform_fill(w, fan_in, l.units, layer_seed);
        add("weight", std::move(w));
        add("bias", Tensor({l.units}, 0.0));
        break;
      }
      case LayerKind::affine:
        add("scale", Tensor({in[0]}, 1.0));
        add("shift", Tensor({in[0]}, 0.0));
        break;
      default:
        break;
    }
    in = shapes[i];
  }
}

namespace {

Var flatten(Var v) {
  const Shape& s = v.shape();
  if (s.size() == 2) return v;
  return ops::reshape(v, {s[0], v.value().numel() / s[0]});
}

}  // namespace

EncoderOutput Encoder::forward(Tape& tape, Var batch, bool trainable) {
  const Shape& bs = batch.shape();
  Shape expected = config_.input_shape;
  if (bs.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), bs.begin() + 1)) {
    throw DimensionError("encoder expects batches of " + shape_str(expected) + " samples, got " + shape_str(bs));
  }
  auto param = [&](std::size_t layer, std::size_t k) {
    return tape.parameter(params_[layer_params_[layer][k]].value, trainable);
  };
  EncoderOutput out;
  Var cur = batch;
  const std::size_t last = config_.layers.size() - 1;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const LayerSpec& l = config_.layers[i];
    if (i == last) out.penultimate = flatten(cur);
    switch (l.kind) {
      case LayerKind::conv:
        cur = ops::conv2d(cur, param(i, 0), param(i, 1), l.same_padding ? ops::Padding::same : ops::Padding::valid);
        break;
      case LayerKind::maxpool: cur = ops::maxpool2d(cur, l.kernel, l.stride); break;
      case LayerKind::avgpool: cur = ops::avgpool2d(cur, l.kernel, l.stride); break;
      case LayerKind::linear: cur = ops::linear(cur, param(i, 0), param(i, 1)); break;
      case LayerKind::relu: cur = ops::relu(cur); break;
      case LayerKind::affine: cur = ops::channel_affine(cur, param(i, 0), param(i, 1)); break;
    }
    if (i == config_.shallow_tap) out.shallow = flatten(cur);
    if (i == config_.deep_tap) out.deep = flatten(cur);
  }
  out.logits = cur;
  out.z = ops::softmax(cur);
  return out;
}

std::size_t Encoder::deep_width() const { return shape_numel(config_.layer_shapes()[config_.deep_tap]); }

std::size_t Encoder::shallow_width() const { return shape_numel(config_.layer_shapes()[config_.shallow_tap]); }

std::size_t Encoder::penultimate_width() const {
  const auto shapes = config_.layer_shapes();
  return shapes.size() >= 2 ? shape_numel(shapes[shapes.size() - 2]) : shape_numel(config_.input_shape);
}

std::uint64_t Encoder::checksum() const { return dccm::checksum(params_); }

Encoder init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderConfig c = config;
  c.seed = seed;
  return Encoder(std::move(c));
}

Discriminator::Discriminator(std::size_t deep_width, std::size_t shallow_width, std::size_t hidden,
                             std::uint64_t seed, bool zero_final_layer)
    : deep_width_(deep_width), shallow_width_(shallow_width), hidden_(hidden) {
  if (deep_width == 0 || shallow_width == 0 || hidden == 0) throw ConfigError("discriminator widths must be positive");
  const std::size_t in = deep_width + shallow_width;
  const std::size_t widths[4] = {in, hidden, hidden, 1};
  for (std::size_t l = 0; l < 3; ++l) {
    Tensor w({widths[l + 1], widths[l]});
    if (!(zero_final_layer && l == 2)) scaled_uniform_fill(w, widths[l], widths[l + 1], mix_seed(seed, l));
    params_.push_back({"disc" + std::to_string(l) + ".weight", std::move(w)});
    params_.push_back({"disc" + std::to_string(l) + ".bias", Tensor({widths[l + 1]}, 0.0)});
  }
}

Var Discriminator::score(Tape& tape, Var deep, Var shallow, bool trainable) {
  const Shape& ds = deep.shape();
  const Shape& ss = shallow.shape();
  if (ds.size() != 2 || ss.size() != 2 || ds[0] != ss[0]) {
    throw DimensionError("discriminator: row counts differ, " + shape_str(ds) + " vs " + shape_str(ss));
  }
  if (ds[1] != deep_width_ || ss[1] != shallow_width_) {
    throw DimensionError("discriminator trained on widths (" + std::to_string(deep_width_) + ", " +
                         std::to_string(shallow_width_) + "), got " + shape_str(ds) + " and " + shape_str(ss));
  }
  const std::size_t rows = ds[0];
  const Var parts[2] = {deep, shallow};
  Var h = ops::concat(parts, 1);
  for (std::size_t l = 0; l < 3; ++l) {
    h = ops::linear(h, tape.parameter(params_[2 * l].value, trainable), tape.parameter(params_[2 * l + 1].value, trainable));
    if (l < 2) h = ops::relu(h);
  }
  return ops::reshape(h, {rows});
}

}  // namespace dccm
