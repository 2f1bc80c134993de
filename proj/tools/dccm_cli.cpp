// Command-line front end: train, eval, analyze-graph, gen-data, gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dccm/config.hpp"
#include "dccm/data_io.hpp"
#include "dccm/errors.hpp"
#include "dccm/evaluation.hpp"
#include "dccm/gradient_suite.hpp"
#include "dccm/graph_analysis.hpp"
#include "dccm/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_thresholds(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--thresholds: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError("--thresholds needs at least one value");
  return out;
}

void require_file(const std::string& flag, const fs::path& path) {
  if (!fs::exists(path)) throw UsageError(flag + ": file not found: " + path.string());
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& resume, std::size_t epochs) {
  require_file("--config", config_path);
  dccm::ExperimentConfig config = dccm::load_config(config_path);
  if (!out.empty()) config.output_dir = out;
  if (epochs > 0) config.epochs = epochs;
  dccm::Dataset data = dccm::load_experiment_data(config.dataset);
  for (const auto& w : data.warnings()) std::cerr << "warning: " << w << '\n';

  std::optional<dccm::Trainer> trainer;
  if (!resume.empty()) {
    require_file("--resume", resume);
    trainer.emplace(dccm::Trainer::resume(resume, std::move(data), config.epochs,
                                          out.empty() ? std::nullopt : std::optional<std::string>(out)));
  } else {
    trainer.emplace(std::move(config), std::move(data));
  }
  trainer->set_log(&std::cerr);
  const auto history = trainer->run(true);
  if (!history.empty()) std::cout << dccm::kMetricsHeader << '\n' << dccm::format_metrics_row(history.back()) << '\n';
  return 0;
}

void write_histogram(const fs::path& path, const dccm::ConcentrationHistogram& h) {
  std::ofstream out(path);
  out << "lower,upper,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) out << h.lower[b] << ',' << h.upper[b] << ',' << h.counts[b] << '\n';
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& out) {
  require_file("--checkpoint", ckpt_path);
  require_file("--data", data_path);
  const dccm::Checkpoint ckpt = dccm::load_checkpoint(ckpt_path);
  const dccm::ExperimentConfig config = dccm::ExperimentConfig::from_json(ckpt.config_json);
  const dccm::Dataset data = dccm::load_dataset(data_path);
  dccm::Encoder enc = dccm::encoder_from_checkpoint(ckpt, data.sample_shape());
  const dccm::EvalResult r = dccm::evaluate(enc, data, config.thres2, config.bcubed_thresholds);

  fs::create_directories(out);
  dccm::write_embeddings_csv(fs::path(out) / "embeddings.csv", r.predictions.deep, r.predictions.labels);
  write_histogram(fs::path(out) / "concentration.csv", r.histogram);
  if (!r.bcubed.empty()) dccm::write_bcubed_csv(fs::path(out) / "bcubed.csv", r.bcubed);
  {
    std::ofstream labels(fs::path(out) / "labels.csv");
    labels << "sample_id,label\n";
    for (std::size_t i = 0; i < r.predictions.labels.size(); ++i) labels << i << ',' << r.predictions.labels[i] << '\n';
  }
  std::cout << "samples " << data.size() << "\nselected_label_frac " << r.selected_fraction << '\n';
  if (r.scores) {
    std::cout << "nmi " << r.scores->nmi << "\nacc " << r.scores->acc << "\nari " << r.scores->ari << '\n';
  } else {
    std::cerr << "warning: no ground truth, metrics omitted\n";
  }
  return 0;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& data_path, const std::string& thresholds,
                const std::string& out) {
  require_file("--checkpoint", ckpt_path);
  require_file("--data", data_path);
  const std::vector<double> ts = parse_thresholds(thresholds);
  const dccm::Checkpoint ckpt = dccm::load_checkpoint(ckpt_path);
  const dccm::Dataset data = dccm::load_dataset(data_path);
  dccm::Encoder enc = dccm::encoder_from_checkpoint(ckpt, data.sample_shape());
  const dccm::Predictions pred = dccm::predict(enc, data);
  const dccm::Tensor sim = dccm::cosine_similarity_values(pred.z);
  const dccm::ThresholdSweep sweep = dccm::threshold_partition_sweep(sim, false);

  std::vector<dccm::BCubedPoint> curve;
  if (data.truth()) curve = dccm::bcubed_curve(sim, dccm::Partition::from_labels(data.truth()->labels), ts);
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "graph.csv");
  csv << "threshold,components,precision,recall\n";
  for (std::size_t i = 0; i < ts.size(); ++i) {
    csv << ts[i] << ',' << sweep.components_at(ts[i]);
    if (curve.empty()) {
      csv << ",,\n";
    } else {
      csv << ',' << curve[i].precision << ',' << curve[i].recall << '\n';
    }
  }
  const dccm::OneHotReport oh = dccm::verify_one_hot(pred.z);
  std::cout << "one_hot_fraction " << oh.fraction << '\n';
  const std::size_t k = pred.z.dim(1);
  if (k <= data.size()) {
    const auto t = dccm::find_k_partition_threshold(sweep, k);
    std::cout << "k_partition_threshold " << (t ? std::to_string(*t) : std::string("none")) << '\n';
  }
  if (sweep.perturbed) std::cerr << "warning: tied similarities were perturbed for the sweep\n";
  return 0;
}

int cmd_gen(const std::string& kind, const std::string& out, const dccm::BlobParams& params) {
  if (kind != "blobs") throw UsageError("--kind: only 'blobs' is supported");
  const dccm::Dataset data = dccm::generate_blobs(params);
  dccm::write_dataset(out, data);
  std::cout << "wrote " << data.size() << " samples to " << out << '\n';
  return 0;
}

int cmd_gradcheck(std::size_t seeds) {
  const dccm::GradientReport report = dccm::run_gradient_suite(seeds);
  for (const auto& r : report.results) {
    std::printf("%-28s %-9s max_error %.3e  %s\n", r.name.c_str(), r.primitive ? "primitive" : "loss", r.max_error,
                r.passed ? "ok" : "FAIL");
  }
  std::printf("max primitive error %.3e (tol %.0e)\nmax loss error %.3e (tol %.0e)\n%.2f s\n",
              report.max_primitive_error, dccm::kPrimitiveTolerance, report.max_loss_error, dccm::kLossTolerance,
              report.seconds);
  return report.passed ? 0 : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep clustering from pseudo-graph and pseudo-label supervision"};
  app.require_subcommand(1);

  std::string config_path, train_out, eval_out, analyze_out, resume, ckpt, data_path, thresholds, kind, gen_out;
  std::size_t epochs = 0, seeds = 10;
  dccm::BlobParams blobs;

  auto* train = app.add_subcommand("train", "Train from a JSON experiment config");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--out", train_out, "Output directory (overrides the config)");
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--epochs", epochs, "Total epochs (overrides the config)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Dataset (.bin CIFAR batch or DTNS tensor)")->required();
  eval->add_option("--out", eval_out, "Output directory")->default_val("eval");

  auto* analyze = app.add_subcommand("analyze-graph", "Threshold sweep and BCubed of the prediction graph");
  analyze->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  analyze->add_option("--data", data_path, "Dataset")->required();
  analyze->add_option("--thresholds", thresholds, "Comma-separated thresholds")->required();
  analyze->add_option("--out", analyze_out, "Output directory")->default_val("analysis");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--kind", kind, "Dataset kind (blobs)")->required();
  gen->add_option("--out", gen_out, "Output tensor file")->required();
  gen->add_option("--k", blobs.k, "Clusters")->default_val(4);
  gen->add_option("--per-cluster", blobs.per_cluster, "Samples per cluster")->default_val(100);
  gen->add_option("--dim", blobs.dim, "Dimension")->default_val(16);
  gen->add_option("--separation", blobs.separation, "Minimum centre distance")->default_val(10.0);
  gen->add_option("--sigma", blobs.sigma, "Cluster standard deviation")->default_val(1.0);
  gen->add_option("--seed", blobs.seed, "Seed")->default_val(0);

  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad->add_option("--seeds", seeds, "Random seeds per case")->default_val(10);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*train) return cmd_train(config_path, train_out, resume, epochs);
    if (*eval) return cmd_eval(ckpt, data_path, eval_out);
    if (*analyze) return cmd_analyze(ckpt, data_path, thresholds, analyze_out);
    if (*gen) return cmd_gen(kind, gen_out, blobs);
    if (*grad) return cmd_gradcheck(seeds);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const dccm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
