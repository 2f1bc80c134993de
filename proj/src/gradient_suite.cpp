#include "dccm/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "dccm/correlation.hpp"
#include "dccm/gradcheck.hpp"
#include "dccm/model.hpp"
#include "dccm/objective.hpp"
#include "dccm/ops.hpp"
#include "dccm/rng.hpp"
#include "dccm/robustness.hpp"

namespace dccm {

namespace {

using Gen = std::mt19937_64;
using Fill = Tensor (*)(const Shape&, Gen&);
constexpr double kEps = 1e-5;

Tensor uniform(const Shape& shape, Gen& gen, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = d(gen);
  return t;
}

Tensor signed_unit(const Shape& s, Gen& g) { return uniform(s, g, -1.0, 1.0); }

// Magnitudes in [0.1, 1] keep points clear of the kink at zero.
Tensor off_zero(const Shape& s, Gen& g) {
  Tensor t = uniform(s, g, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = sign(g) ? v : -v;
  return t;
}

Tensor positive(const Shape& s, Gen& g) { return uniform(s, g, 0.5, 2.0); }

Tensor wide(const Shape& s, Gen& g) { return uniform(s, g, -3.0, 3.0); }

// Keeps values at least 0.01 away from the clamp bounds used below.
Tensor off_bounds(const Shape& s, Gen& g) {
  Tensor t = signed_unit(s, g);
  for (auto& v : t.data()) {
    if (std::abs(std::abs(v) - 0.5) < 0.01) v += 0.02;
  }
  return t;
}

/// sum(f(inputs) * R) with a fixed random projection R, so every output
/// element contributes a distinct weight to the gradient.
double check_operand(std::uint64_t seed, const std::vector<Shape>& shapes, const std::vector<Fill>& fills,
                     std::size_t checked, const std::function<Var(std::span<const Var>)>& f) {
  Gen gen(seed);
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < shapes.size(); ++i) inputs.push_back(fills[i](shapes[i], gen));
  Shape out_shape;
  {
    Tape scratch;
    std::vector<Var> vs;
    for (const auto& t : inputs) vs.push_back(scratch.constant(t));
    out_shape = f(vs).value().shape();
  }
  const Tensor proj = signed_unit(out_shape, gen);
  PointLoss build = [&](Tape& tape, Var point) {
    std::vector<Var> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) vs.push_back(i == checked ? point : tape.constant(inputs[i]));
    return ops::sum(ops::mul(f(vs), tape.constant(proj)));
  };
  return gradient_check(build, inputs[checked], kEps);
}

void add_primitive(std::vector<GradientCase>& cases, const std::string& name, std::vector<Shape> shapes,
                   std::vector<Fill> fills, std::function<Var(std::span<const Var>)> f) {
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const std::string label = shapes.size() == 1 ? name : name + "[" + std::to_string(k) + "]";
    cases.push_back({label, true, [=](std::uint64_t seed) { return check_operand(seed, shapes, fills, k, f); }});
  }
}

// Threshold at the median keeps both edge kinds present in the fixed graph.
double median_off_diagonal(const Tensor& s) {
  const std::size_t n = s.dim(0);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) v.push_back(s[i * n + j]);
    }
  }
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

Tensor softmax_values(const Tensor& logits) {
  Tape t;
  return ops::softmax(t.constant(logits)).value();
}

double check_graph_loss(std::uint64_t seed) {
  Gen gen(seed);
  const Tensor logits = wide({6, 4}, gen);
  const Tensor s = cosine_similarity_values(softmax_values(logits));
  const PseudoGraph w = build_pseudo_graph(s, median_off_diagonal(s));
  return gradient_check(
      [&](Tape&, Var p) { return pseudo_graph_loss(cosine_similarity(ops::softmax(p)), w); }, logits, kEps);
}

double check_label_loss(std::uint64_t seed) {
  Gen gen(seed);
  const Tensor logits = wide({6, 4}, gen);
  const Tensor z = softmax_values(logits);
  std::vector<double> conf;
  for (std::size_t i = 0; i < 6; ++i) conf.push_back(*std::max_element(z.data().begin() + i * 4, z.data().begin() + i * 4 + 4));
  std::sort(conf.begin(), conf.end());
  const PseudoLabels labels = assign_pseudo_labels(z, conf[3]);
  return gradient_check([&](Tape&, Var p) { return pseudo_label_loss(ops::softmax(p), labels); }, logits, kEps);
}

// Zero biases put a relu kink exactly at rows whose inputs are all inactive.
void jitter_biases(std::vector<NamedTensor>& params, Gen& gen) {
  std::uniform_real_distribution<double> d(-0.2, 0.2);
  for (auto& p : params) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.value.data()) v = d(gen);
    }
  }
}

TripletBatch random_pairs(std::size_t n, Gen& gen) {
  std::vector<std::uint8_t> w(n * n, 0);
  std::bernoulli_distribution edge(0.4);
  for (std::size_t i = 0; i < n; ++i) {
    w[i * n + i] = 1;
    for (std::size_t j = i + 1; j < n; ++j) w[i * n + j] = w[j * n + i] = edge(gen) ? 1 : 0;
  }
  w[1] = w[n] = 0;  // sample 0 has a negative
  const PseudoGraph g(n, std::move(w), 0.5);
  const Tensor sim = signed_unit({n, n}, gen);
  return sample_triplet_pairs(g, sim, SamplingStrategy::nearest_pos_random_neg, n, gen());
}

double check_mi(std::uint64_t seed, int target) {
  Gen gen(seed);
  const std::size_t n = 6, dw = 3, sw = 4;
  const Tensor deep = signed_unit({n, dw}, gen), shallow = signed_unit({n, sw}, gen);
  const TripletBatch pairs = random_pairs(n, gen);
  Discriminator disc(dw, sw, 5, gen());
  jitter_biases(disc.parameters(), gen);
  if (target == 2) {
    std::vector<Tensor*> params;
    for (auto& p : disc.parameters()) params.push_back(&p.value);
    return gradient_check_params(
        [&](Tape& t) { return triplet_mi_loss(disc, t.constant(deep), t.constant(shallow), pairs); }, params, kEps);
  }
  if (target == 0) {
    return gradient_check([&](Tape& t, Var p) { return triplet_mi_loss(disc, p, t.constant(shallow), pairs, false); },
                          deep, kEps);
  }
  return gradient_check([&](Tape& t, Var p) { return triplet_mi_loss(disc, t.constant(deep), p, pairs, false); },
                        shallow, kEps);
}

double check_invariance(std::uint64_t seed) {
  Gen gen(seed);
  const Tensor a = wide({5, 3}, gen), b = wide({5, 3}, gen);
  return gradient_check(
      [&](Tape& t, Var p) { return feature_invariance_loss(ops::softmax(p), ops::softmax(t.constant(b))); }, a, kEps);
}

double check_robustness(std::uint64_t seed) {
  Gen gen(seed);
  const Tensor orig = wide({6, 4}, gen), moved = wide({6, 4}, gen);
  const Tensor z = softmax_values(orig);
  const Tensor s = cosine_similarity_values(z);
  const PseudoGraph w = build_pseudo_graph(s, median_off_diagonal(s));
  const PseudoLabels labels = assign_pseudo_labels(z, 0.3);
  return gradient_check(
      [&](Tape&, Var p) {
        Var zt = ops::softmax(p);
        return robustness_losses(zt, cosine_similarity(zt), w, labels, 5.0).combined;
      },
      moved, kEps);
}

double check_objective(std::uint64_t seed) {
  Gen gen(seed);
  const std::size_t b = 8, dim = 4, k = 3;
  Encoder enc(EncoderConfig::mlp_default(dim, k, gen(), 6));
  Discriminator disc(enc.deep_width(), enc.shallow_width(), 8, gen());
  jitter_biases(enc.parameters(), gen);
  jitter_biases(disc.parameters(), gen);
  const Tensor batch = wide({b, dim}, gen);

  ObjectiveSettings s;
  s.toggles.use_feature_invariance = true;
  s.transform = TransformSpec::all_default(0);
  Tensor z;
  {
    Tape t;
    z = enc.forward(t, t.constant(batch), false).z.value();
  }
  const Tensor sim = cosine_similarity_values(z);
  s.thres1 = median_off_diagonal(sim);
  std::vector<double> conf;
  for (std::size_t i = 0; i < b; ++i) conf.push_back(*std::max_element(z.data().begin() + i * k, z.data().begin() + (i + 1) * k));
  std::sort(conf.begin(), conf.end());
  s.thres2 = conf[b / 2];
  const StepTargets targets = compute_targets(z, s, gen());
  const std::uint64_t tseed = gen();

  std::vector<Tensor*> params;
  for (auto& p : enc.parameters()) params.push_back(&p.value);
  for (auto& p : disc.parameters()) params.push_back(&p.value);
  return gradient_check_params(
      [&](Tape& t) { return build_objective(t, enc, disc, batch, s, tseed, 0, &targets).loss; }, params, kEps);
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  using V = std::span<const Var>;
  std::vector<GradientCase> c;
  const Fill u = signed_unit;
  add_primitive(c, "add", {{2, 3}, {2, 3}}, {u, u}, [](V v) { return ops::add(v[0], v[1]); });
  add_primitive(c, "add.broadcast", {{2, 3}, {1, 3}}, {u, u}, [](V v) { return ops::add(v[0], v[1]); });
  add_primitive(c, "add.scalar", {{2, 3}, {1}}, {u, u}, [](V v) { return ops::add(v[0], v[1]); });
  add_primitive(c, "sub", {{2, 3}, {2, 1}}, {u, u}, [](V v) { return ops::sub(v[0], v[1]); });
  add_primitive(c, "mul", {{2, 3}, {2, 3}}, {u, u}, [](V v) { return ops::mul(v[0], v[1]); });
  add_primitive(c, "mul.broadcast", {{3, 1}, {1, 4}}, {u, u}, [](V v) { return ops::mul(v[0], v[1]); });
  add_primitive(c, "div", {{2, 3}, {2, 3}}, {u, positive}, [](V v) { return ops::div(v[0], v[1]); });
  add_primitive(c, "div.broadcast", {{2, 3}, {2, 1}}, {u, positive}, [](V v) { return ops::div(v[0], v[1]); });
  add_primitive(c, "matmul", {{3, 4}, {4, 2}}, {u, u}, [](V v) { return ops::matmul(v[0], v[1]); });
  add_primitive(c, "transpose", {{3, 4}}, {u}, [](V v) { return ops::transpose(v[0]); });
  add_primitive(c, "conv2d.valid", {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}}, {u, u, u},
                [](V v) { return ops::conv2d(v[0], v[1], v[2], ops::Padding::valid); });
  add_primitive(c, "conv2d.same", {{1, 2, 4, 4}, {2, 2, 3, 3}}, {u, u},
                [](V v) { return ops::conv2d(v[0], v[1], Var{}, ops::Padding::same); });
  add_primitive(c, "maxpool2d", {{2, 2, 4, 4}}, {u}, [](V v) { return ops::maxpool2d(v[0], 2); });
  add_primitive(c, "maxpool2d.overlap", {{1, 2, 4, 4}}, {u}, [](V v) { return ops::maxpool2d(v[0], 2, 1); });
  add_primitive(c, "avgpool2d", {{2, 2, 4, 4}}, {u}, [](V v) { return ops::avgpool2d(v[0], 2); });
  add_primitive(c, "avgpool2d.overlap", {{1, 2, 5, 5}}, {u}, [](V v) { return ops::avgpool2d(v[0], 3, 1); });
  add_primitive(c, "relu", {{3, 4}}, {off_zero}, [](V v) { return ops::relu(v[0]); });
  add_primitive(c, "softmax", {{3, 4}}, {wide}, [](V v) { return ops::softmax(v[0]); });
  add_primitive(c, "softplus", {{3, 4}}, {wide}, [](V v) { return ops::softplus(v[0]); });
  add_primitive(c, "log", {{3, 4}}, {positive}, [](V v) { return ops::log(v[0]); });
  add_primitive(c, "exp", {{3, 4}}, {u}, [](V v) { return ops::exp(v[0]); });
  add_primitive(c, "sqrt", {{3, 4}}, {positive}, [](V v) { return ops::sqrt(v[0]); });
  add_primitive(c, "sum", {{3, 4}}, {u}, [](V v) { return ops::sum(v[0]); });
  add_primitive(c, "mean", {{3, 4}}, {u}, [](V v) { return ops::mean(v[0]); });
  add_primitive(c, "concat.rows", {{2, 3}, {1, 3}}, {u, u}, [](V v) { return ops::concat(v, 0); });
  add_primitive(c, "concat.cols", {{2, 3}, {2, 2}}, {u, u}, [](V v) { return ops::concat(v, 1); });
  add_primitive(c, "l2norm", {{3, 4}}, {off_zero}, [](V v) { return ops::l2norm(v[0]); });
  add_primitive(c, "scale", {{3, 4}}, {u}, [](V v) { return ops::scale(v[0], -1.7); });
  add_primitive(c, "clamp", {{3, 4}}, {off_bounds}, [](V v) { return ops::clamp(v[0], -0.5, 0.5); });
  add_primitive(c, "reshape", {{2, 6}}, {u}, [](V v) { return ops::reshape(v[0], {3, 4}); });
  add_primitive(c, "select_rows", {{4, 3}}, {u}, [](V v) { return ops::select_rows(v[0], {2, 0, 2, 3}); });
  add_primitive(c, "channel_affine", {{2, 3, 2, 2}, {3}, {3}}, {u, u, u},
                [](V v) { return ops::channel_affine(v[0], v[1], v[2]); });
  add_primitive(c, "linear", {{3, 4}, {2, 4}, {2}}, {u, u, u}, [](V v) { return ops::linear(v[0], v[1], v[2]); });

  c.push_back({"loss.pseudo_graph", false, check_graph_loss});
  c.push_back({"loss.pseudo_label", false, check_label_loss});
  c.push_back({"loss.mi.deep", false, [](std::uint64_t s) { return check_mi(s, 0); }});
  c.push_back({"loss.mi.shallow", false, [](std::uint64_t s) { return check_mi(s, 1); }});
  c.push_back({"loss.mi.discriminator", false, [](std::uint64_t s) { return check_mi(s, 2); }});
  c.push_back({"loss.feature_invariance", false, check_invariance});
  c.push_back({"loss.robustness", false, check_robustness});
  c.push_back({"loss.objective", false, check_objective});
  return c;
}

GradientReport run_gradient_suite(std::size_t seeds) {
  const auto start = std::chrono::steady_clock::now();
  GradientReport report;
  report.passed = true;
  for (const auto& gc : gradient_cases()) {
    GradientResult r{gc.name, gc.primitive, 0.0, gc.primitive ? kPrimitiveTolerance : kLossTolerance, false};
    for (std::size_t s = 0; s < seeds; ++s) r.max_error = std::max(r.max_error, gc.run(mix_seed(s, 0x6C)));
    r.passed = r.max_error < r.tolerance;
    report.passed = report.passed && r.passed;
    double& worst = gc.primitive ? report.max_primitive_error : report.max_loss_error;
    worst = std::max(worst, r.max_error);
    report.results.push_back(std::move(r));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace dccm
