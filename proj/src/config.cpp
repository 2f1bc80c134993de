#include "dccm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dccm/errors.hpp"

namespace dccm {

using nlohmann::json;

LossToggles LossToggles::ablation(int row) {
  if (row < 1 || row > 4) throw ConfigError("ablation row must be 1..4, got " + std::to_string(row));
  LossToggles t;
  t.use_robustness = row >= 2;
  t.use_pseudo_label = row >= 3;
  t.use_mi = row >= 4;
  t.use_feature_invariance = false;
  return t;
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json layer_to_json(const LayerSpec& l) {
  return {{"kind", std::string(layer_kind_name(l.kind))},
          {"units", l.units},
          {"kernel", l.kernel},
          {"stride", l.stride},
          {"same_padding", l.same_padding}};
}

LayerSpec layer_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "units", "kernel", "stride", "same_padding"}, where);
  LayerSpec l;
  std::string kind = "relu";
  read(j, "kind", kind, where);
  try {
    l.kind = parse_layer_kind(kind);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  read(j, "units", l.units, where);
  read(j, "kernel", l.kernel, where);
  read(j, "stride", l.stride, where);
  read(j, "same_padding", l.same_padding, where);
  return l;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto unit_open = [](double v) { return v > 0.0 && v < 1.0; };
  if (!unit_open(thres1)) throw ConfigError("thres1 must lie in (0, 1)");
  if (!unit_open(thres2)) throw ConfigError("thres2 must lie in (0, 1)");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0)) throw ConfigError("rmsprop_decay must lie in [0, 1)");
  if (!(rmsprop_epsilon > 0.0)) throw ConfigError("rmsprop_epsilon must be > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (mi_pairs > batch_size) throw ConfigError("mi_pairs must not exceed batch_size");
  if (discriminator_hidden == 0) throw ConfigError("discriminator_hidden must be >= 1");
  if (bcubed_every == 0) throw ConfigError("bcubed_every must be >= 1");
  for (double t : bcubed_thresholds) {
    if (!unit_open(t)) throw ConfigError("bcubed_thresholds must lie in (0, 1)");
  }
  const auto& k = dataset.kind;
  if (k != "blobs" && k != "cifar" && k != "file") throw ConfigError("dataset.kind must be blobs, cifar or file");
  if (k != "blobs" && dataset.paths.empty()) throw ConfigError("dataset.paths is required for kind '" + k + "'");
  const auto& e = encoder.kind;
  if (e != "auto" && e != "mlp" && e != "conv" && e != "custom") {
    throw ConfigError("encoder.kind must be auto, mlp, conv or custom");
  }
  if (e == "custom" && encoder.layers.empty()) throw ConfigError("encoder.layers is required for a custom encoder");
  transform.validate();
}

std::string ExperimentConfig::to_json() const {
  json layers = json::array();
  for (const auto& l : encoder.layers) layers.push_back(layer_to_json(l));
  json j = {
      {"dataset",
       {{"kind", dataset.kind},
        {"blobs",
         {{"k", dataset.blobs.k},
          {"per_cluster", dataset.blobs.per_cluster},
          {"dim", dataset.blobs.dim},
          {"separation", dataset.blobs.separation},
          {"sigma", dataset.blobs.sigma},
          {"seed", dataset.blobs.seed}}},
        {"paths", dataset.paths},
        {"classes", dataset.classes},
        {"max_per_class", dataset.max_per_class},
        {"standardize", dataset.standardize}}},
      {"encoder",
       {{"kind", encoder.kind},
        {"hidden", encoder.hidden},
        {"layers", layers},
        {"shallow_tap", encoder.shallow_tap},
        {"deep_tap", encoder.deep_tap}}},
      {"num_clusters", num_clusters},
      {"thres1", thres1},
      {"thres2", thres2},
      {"alpha", alpha},
      {"beta", beta},
      {"gamma", gamma},
      {"learning_rate", learning_rate},
      {"rmsprop_decay", rmsprop_decay},
      {"rmsprop_epsilon", rmsprop_epsilon},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"transform",
       {{"rotation", transform.rotation},
        {"max_degrees", transform.max_degrees},
        {"shift", transform.shift},
        {"max_fraction", transform.max_fraction},
        {"rescale", transform.rescale},
        {"min_scale", transform.min_scale},
        {"max_scale", transform.max_scale},
        {"flip", transform.flip},
        {"flip_probability", transform.flip_probability}}},
      {"sampling", std::string(sampling_strategy_name(sampling))},
      {"mi_pairs", mi_pairs},
      {"discriminator_hidden", discriminator_hidden},
      {"toggles",
       {{"use_robustness", toggles.use_robustness},
        {"use_pseudo_label", toggles.use_pseudo_label},
        {"use_mi", toggles.use_mi},
        {"use_feature_invariance", toggles.use_feature_invariance}}},
      {"seed", seed},
      {"output_dir", output_dir},
      {"bcubed_thresholds", bcubed_thresholds},
      {"bcubed_every", bcubed_every},
  };
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  const std::string root = "config";
  check_keys(j,
             {"dataset", "encoder", "num_clusters", "thres1", "thres2", "alpha", "beta", "gamma", "learning_rate",
              "rmsprop_decay", "rmsprop_epsilon", "epochs", "batch_size", "transform", "sampling", "mi_pairs",
              "discriminator_hidden", "toggles", "ablation", "seed", "output_dir", "bcubed_thresholds",
              "bcubed_every"},
             root);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    const std::string where = "dataset";
    check_keys(d, {"kind", "blobs", "paths", "classes", "max_per_class", "standardize"}, where);
    read(d, "kind", c.dataset.kind, where);
    if (d.contains("blobs")) {
      const json& b = d["blobs"];
      check_keys(b, {"k", "per_cluster", "dim", "separation", "sigma", "seed"}, "dataset.blobs");
      read(b, "k", c.dataset.blobs.k, "dataset.blobs");
      read(b, "per_cluster", c.dataset.blobs.per_cluster, "dataset.blobs");
      read(b, "dim", c.dataset.blobs.dim, "dataset.blobs");
      read(b, "separation", c.dataset.blobs.separation, "dataset.blobs");
      read(b, "sigma", c.dataset.blobs.sigma, "dataset.blobs");
      read(b, "seed", c.dataset.blobs.seed, "dataset.blobs");
    }
    read(d, "paths", c.dataset.paths, where);
    read(d, "classes", c.dataset.classes, where);
    read(d, "max_per_class", c.dataset.max_per_class, where);
    read(d, "standardize", c.dataset.standardize, where);
  }
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    const std::string where = "encoder";
    check_keys(e, {"kind", "hidden", "layers", "shallow_tap", "deep_tap"}, where);
    read(e, "kind", c.encoder.kind, where);
    read(e, "hidden", c.encoder.hidden, where);
    if (e.contains("layers")) {
      if (!e["layers"].is_array()) throw ConfigError("encoder.layers must be an array");
      for (std::size_t i = 0; i < e["layers"].size(); ++i) {
        c.encoder.layers.push_back(layer_from_json(e["layers"][i], "encoder.layers[" + std::to_string(i) + "]"));
      }
    }
    read(e, "shallow_tap", c.encoder.shallow_tap, where);
    read(e, "deep_tap", c.encoder.deep_tap, where);
  }
  read(j, "num_clusters", c.num_clusters, root);
  read(j, "thres1", c.thres1, root);
  read(j, "thres2", c.thres2, root);
  read(j, "alpha", c.alpha, root);
  read(j, "beta", c.beta, root);
  read(j, "gamma", c.gamma, root);
  read(j, "learning_rate", c.learning_rate, root);
  read(j, "rmsprop_decay", c.rmsprop_decay, root);
  read(j, "rmsprop_epsilon", c.rmsprop_epsilon, root);
  read(j, "epochs", c.epochs, root);
  read(j, "batch_size", c.batch_size, root);
  if (j.contains("transform")) {
    const json& t = j["transform"];
    const std::string where = "transform";
    check_keys(t,
               {"rotation", "max_degrees", "shift", "max_fraction", "rescale", "min_scale", "max_scale", "flip",
                "flip_probability"},
               where);
    read(t, "rotation", c.transform.rotation, where);
    read(t, "max_degrees", c.transform.max_degrees, where);
    read(t, "shift", c.transform.shift, where);
    read(t, "max_fraction", c.transform.max_fraction, where);
    read(t, "rescale", c.transform.rescale, where);
    read(t, "min_scale", c.transform.min_scale, where);
    read(t, "max_scale", c.transform.max_scale, where);
    read(t, "flip", c.transform.flip, where);
    read(t, "flip_probability", c.transform.flip_probability, where);
  }
  if (j.contains("sampling")) {
    std::string s;
    read(j, "sampling", s, root);
    c.sampling = parse_sampling_strategy(s);
  }
  read(j, "mi_pairs", c.mi_pairs, root);
  read(j, "discriminator_hidden", c.discriminator_hidden, root);
  if (j.contains("ablation")) {
    int row = 0;
    read(j, "ablation", row, root);
    c.toggles = LossToggles::ablation(row);
  }
  if (j.contains("toggles")) {
    const json& t = j["toggles"];
    const std::string where = "toggles";
    check_keys(t, {"use_robustness", "use_pseudo_label", "use_mi", "use_feature_invariance"}, where);
    read(t, "use_robustness", c.toggles.use_robustness, where);
    read(t, "use_pseudo_label", c.toggles.use_pseudo_label, where);
    read(t, "use_mi", c.toggles.use_mi, where);
    read(t, "use_feature_invariance", c.toggles.use_feature_invariance, where);
  }
  read(j, "seed", c.seed, root);
  read(j, "output_dir", c.output_dir, root);
  read(j, "bcubed_thresholds", c.bcubed_thresholds, root);
  read(j, "bcubed_every", c.bcubed_every, root);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ExperimentConfig::from_json(ss.str());
}

Dataset load_experiment_data(const DatasetSpec& spec) {
  Dataset data;
  if (spec.kind == "blobs") {
    data = generate_blobs(spec.blobs);
  } else if (spec.kind == "cifar") {
    std::vector<std::filesystem::path> paths(spec.paths.begin(), spec.paths.end());
    data = load_cifar_binary(paths);
    if (!spec.classes.empty()) {
      data = select_classes(data, spec.classes, spec.max_per_class == 0 ? data.size() : spec.max_per_class);
    }
  } else if (spec.kind == "file") {
    data = load_dataset(spec.paths.front());
  } else {
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
  }
  return spec.standardize ? data.standardized() : data;
}

EncoderConfig make_encoder_config(const ExperimentConfig& config, const Shape& sample_shape,
                                  std::size_t num_clusters) {
  std::string kind = config.encoder.kind;
  if (kind == "auto") kind = sample_shape.size() == 3 ? "conv" : "mlp";
  EncoderConfig ec;
  if (kind == "mlp") {
    ec = EncoderConfig::mlp_default(shape_numel(sample_shape), num_clusters, config.seed, config.encoder.hidden);
    if (sample_shape.size() != 1) ec.input_shape = sample_shape;
  } else if (kind == "conv") {
    ec = EncoderConfig::conv_default(sample_shape, num_clusters, config.seed);
  } else {
    ec.input_shape = sample_shape;
    ec.layers = config.encoder.layers;
    ec.shallow_tap = config.encoder.shallow_tap;
    ec.deep_tap = config.encoder.deep_tap;
    ec.num_classes = num_clusters;
    ec.seed = config.seed;
  }
  ec.validate();
  return ec;
}

}  // namespace dccm
