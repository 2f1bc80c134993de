#include "dccm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dccm/errors.hpp"
#include "dccm/metrics.hpp"
#include "dccm/rng.hpp"

namespace dccm {

namespace fs = std::filesystem;

namespace {

std::size_t resolve_clusters(const ExperimentConfig& c, const Dataset& data) {
  if (c.num_clusters != 0) return c.num_clusters;
  if (data.truth()) return data.truth()->num_classes;
  throw ConfigError("num_clusters is required when the data has no labels");
}

Encoder make_encoder(const ExperimentConfig& c, const Dataset& data) {
  c.validate();
  if (data.size() < 2) throw DegenerateInputError("training needs at least 2 samples");
  return Encoder(make_encoder_config(c, data.sample_shape(), resolve_clusters(c, data)));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_metrics_row(const EpochRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.loss_total, r.loss_pg, r.loss_pg_t, r.loss_pl, r.loss_pl_t, r.loss_mi, r.nmi, r.acc, r.ari,
                   r.selected_label_frac, r.positive_pair_frac}) {
    s += ',';
    s += fmt(v);
  }
  return s;
}

Trainer::Trainer(ExperimentConfig config, Dataset data)
    : config_(std::move(config)),
      data_(std::move(data)),
      num_clusters_(resolve_clusters(config_, data_)),
      encoder_(make_encoder(config_, data_)),
      disc_(encoder_.deep_width(), encoder_.shallow_width(), config_.discriminator_hidden, mix_seed(config_.seed, 2)),
      settings_(ObjectiveSettings::from_config(config_)),
      rng_(mix_seed(config_.seed, 1)) {
  config_.num_clusters = num_clusters_;
  opt_.learning_rate = config_.learning_rate;
  opt_.decay = config_.rmsprop_decay;
  opt_.epsilon = config_.rmsprop_epsilon;
}

Trainer Trainer::resume(const fs::path& checkpoint, Dataset data, std::optional<std::size_t> total_epochs,
                        std::optional<std::string> output_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ExperimentConfig config = ExperimentConfig::from_json(ckpt.config_json);
  if (total_epochs) config.epochs = *total_epochs;
  if (output_dir) config.output_dir = *output_dir;
  Trainer t(std::move(config), std::move(data));
  std::vector<NamedTensor*> params = t.all_parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw FormatError(checkpoint.string() + ": holds " + std::to_string(ckpt.parameters.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& src = ckpt.parameters[i];
    if (src.name != params[i]->name || src.value.shape() != params[i]->value.shape()) {
      throw FormatError(checkpoint.string() + ": parameter '" + src.name + "' does not match '" + params[i]->name +
                        "' " + shape_str(params[i]->value.shape()));
    }
    params[i]->value = src.value;
  }
  t.opt_.cache = ckpt.optimizer_state;
  t.epoch_ = ckpt.epoch;
  std::istringstream rng_in(ckpt.rng_state);
  rng_in >> t.rng_;
  if (!rng_in) throw FormatError(checkpoint.string() + ": unreadable RNG state");
  return t;
}

Encoder encoder_from_checkpoint(const Checkpoint& ckpt, const Shape& sample_shape) {
  const ExperimentConfig config = ExperimentConfig::from_json(ckpt.config_json);
  if (config.num_clusters == 0) throw FormatError("checkpoint config lacks num_clusters");
  Encoder enc(make_encoder_config(config, sample_shape, config.num_clusters));
  auto& params = enc.parameters();
  if (ckpt.parameters.size() < params.size()) throw FormatError("checkpoint holds too few parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& src = ckpt.parameters[i];
    if (src.name != params[i].name || src.value.shape() != params[i].value.shape()) {
      throw FormatError("checkpoint parameter '" + src.name + "' does not fit the encoder for sample shape " +
                        shape_str(sample_shape));
    }
    params[i].value = src.value;
  }
  return enc;
}

std::vector<NamedTensor*> Trainer::all_parameters() {
  std::vector<NamedTensor*> out;
  for (auto& p : encoder_.parameters()) out.push_back(&p);
  for (auto& p : disc_.parameters()) out.push_back(&p);
  return out;
}

std::uint64_t Trainer::parameter_checksum() const {
  std::vector<NamedTensor> all = encoder_.parameters();
  all.insert(all.end(), disc_.parameters().begin(), disc_.parameters().end());
  return checksum(all);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_json = config_.to_json();
  c.parameters = encoder_.parameters();
  c.parameters.insert(c.parameters.end(), disc_.parameters().begin(), disc_.parameters().end());
  for (auto& p : c.parameters) p.value = Tensor(p.value.shape(), p.value.storage());  // drop grad slots
  c.optimizer_state = opt_.cache;
  c.epoch = epoch_;
  std::ostringstream rng_out;
  rng_out << rng_;
  c.rng_state = rng_out.str();
  return c;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, checkpoint()); }

EvalResult Trainer::evaluate_now(const std::vector<double>& bcubed_thresholds) {
  return evaluate(encoder_, data_, config_.thres2, bcubed_thresholds);
}

EpochRecord Trainer::run_epoch() {
  const std::uint64_t epoch_seed = rng_();
  const std::size_t batch_size = std::min(config_.batch_size, data_.size());
  const auto batches = minibatches(data_.size(), batch_size, mix_seed(epoch_seed, 0));
  std::vector<NamedTensor*> params = all_parameters();

  EpochRecord rec;
  for (std::size_t step = 0; step < batches.size(); ++step) {
    for (auto* p : params) p->value.zero_grad();
    Tape tape;
    StepResult r;
    try {
      r = build_objective(tape, encoder_, disc_, data_.batch(batches[step]), settings_, mix_seed(epoch_seed, 2 * step + 1),
                          mix_seed(epoch_seed, 2 * step + 2));
      tape.backward(r.loss);
      rmsprop_step(params, opt_);
    } catch (const DivergenceError& e) {
      if (log_) *log_ << "epoch " << epoch_ + 1 << " step " << step << ": " << e.what() << '\n';
      throw;
    }
    if (r.mi_skipped) {
      ++rec.mi_skipped_steps;
      if (log_) *log_ << "epoch " << epoch_ + 1 << " step " << step << ": no negative pairs, MI term skipped\n";
    }
    rec.loss_total += r.parts.total;
    rec.loss_pg += r.parts.l_pg;
    rec.loss_pg_t += r.parts.l_pg_prime;
    rec.loss_pl += r.parts.l_pl;
    rec.loss_pl_t += r.parts.l_pl_prime;
    rec.loss_mi += r.parts.l_mi;
    rec.positive_pair_frac += r.targets.graph.positive_fraction();
    if (data_.truth()) {
      std::vector<std::size_t> classes;
      for (std::size_t i : batches[step]) classes.push_back(data_.truth()->labels[i]);
      const BCubed b = bcubed(r.targets.graph.matrix(), Partition::from_labels(classes));
      rec.graph_precision += b.precision;
      rec.graph_recall += b.recall;
    }
  }
  const double steps = static_cast<double>(batches.size());
  for (double* v : {&rec.loss_total, &rec.loss_pg, &rec.loss_pg_t, &rec.loss_pl, &rec.loss_pl_t, &rec.loss_mi,
                    &rec.positive_pair_frac, &rec.graph_precision, &rec.graph_recall}) {
    *v /= steps;
  }

  ++epoch_;
  rec.epoch = epoch_;
  const bool with_bcubed = epoch_ == 1 || epoch_ % config_.bcubed_every == 0 || epoch_ == config_.epochs;
  last_eval_ = evaluate_now(with_bcubed ? config_.bcubed_thresholds : std::vector<double>{});
  rec.selected_label_frac = last_eval_.selected_fraction;
  if (last_eval_.scores) {
    rec.nmi = last_eval_.scores->nmi;
    rec.acc = last_eval_.scores->acc;
    rec.ari = last_eval_.scores->ari;
  } else {
    rec.nmi = rec.acc = rec.ari = std::nan("");
  }
  return rec;
}

void Trainer::write_epoch_outputs(const EpochRecord& rec, const EvalResult& eval) {
  const fs::path dir(config_.output_dir);
  {
    std::ofstream m(dir / "metrics.csv", std::ios::app);
    m << format_metrics_row(rec) << '\n';
  }
  if (data_.truth()) {
    std::ofstream g(dir / "graph_quality.csv", std::ios::app);
    g << rec.epoch << ',' << fmt(rec.graph_precision) << ',' << fmt(rec.graph_recall) << '\n';
  }
  if (!eval.bcubed.empty()) {
    std::ofstream b(dir / "bcubed.csv", std::ios::app);
    for (const auto& p : eval.bcubed) {
      b << rec.epoch << ',' << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << '\n';
    }
  }
  save(dir / "checkpoint.bin");
}

std::vector<EpochRecord> Trainer::run(bool write_outputs) {
  const fs::path dir(config_.output_dir);
  if (write_outputs) {
    fs::create_directories(dir);
    if (epoch_ == 0 || !fs::exists(dir / "metrics.csv")) {
      std::ofstream(dir / "metrics.csv", std::ios::trunc) << kMetricsHeader << '\n';
      std::ofstream(dir / "bcubed.csv", std::ios::trunc) << "epoch,threshold,precision,recall\n";
      std::ofstream(dir / "graph_quality.csv", std::ios::trunc) << "epoch,precision,recall\n";
    }
    std::ofstream(dir / "config.json", std::ios::trunc) << config_.to_json() << '\n';
  }
  std::vector<EpochRecord> history;
  while (epoch_ < config_.epochs) {
    EpochRecord rec = run_epoch();
    if (log_) {
      *log_ << "epoch " << rec.epoch << " loss " << fmt(rec.loss_total) << " acc " << rec.acc << " nmi " << rec.nmi
            << " selected " << rec.selected_label_frac << '\n';
    }
    if (write_outputs) write_epoch_outputs(rec, last_eval_);
    history.push_back(rec);
  }
  if (write_outputs && last_eval_.predictions.z.numel() > 0) {
    write_embeddings_csv(dir / "embeddings.csv", last_eval_.predictions.deep, last_eval_.predictions.labels);
  }
  return history;
}

}  // namespace dccm
