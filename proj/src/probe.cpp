#include "dccm/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dccm/correlation.hpp"
#include "dccm/errors.hpp"
#include "dccm/evaluation.hpp"
#include "dccm/ops.hpp"
#include "dccm/optimizer.hpp"
#include "dccm/rng.hpp"

namespace dccm {

namespace {

void standardise(Tensor& x, const std::vector<double>& mean, const std::vector<double>& sd) {
  const std::size_t f = x.dim(1);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    for (std::size_t j = 0; j < f; ++j) x[i * f + j] = (x[i * f + j] - mean[j]) / sd[j];
  }
}

}  // namespace

double probe_features(const Tensor& train_x, const std::vector<std::size_t>& train_y, const Tensor& test_x,
                      const std::vector<std::size_t>& test_y, const ProbeSettings& s) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.dim(1) != test_x.dim(1)) {
    throw DimensionError("probe features must be [N, F] with matching F");
  }
  if (train_x.dim(0) != train_y.size() || test_x.dim(0) != test_y.size()) {
    throw DimensionError("probe features and labels differ in length");
  }
  const std::set<std::size_t> train_set(train_y.begin(), train_y.end()), test_set(test_y.begin(), test_y.end());
  if (train_set != test_set) throw ContractError("probe: train and test splits carry different label sets");
  if (train_y.size() < 2) throw DegenerateInputError("probe needs at least 2 training samples");

  const std::size_t n = train_x.dim(0), f = train_x.dim(1);
  const std::size_t classes = *train_set.rbegin() + 1;
  std::vector<double> mean(f, 0.0), sd(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) mean[j] += train_x[i * f + j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) sd[j] += (train_x[i * f + j] - mean[j]) * (train_x[i * f + j] - mean[j]);
  }
  for (auto& v : sd) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
  Tensor xtr = train_x, xte = test_x;
  standardise(xtr, mean, sd);
  standardise(xte, mean, sd);

  std::vector<NamedTensor> params{{"w1", Tensor({s.hidden, f})},
                                  {"b1", Tensor({s.hidden}, 0.0)},
                                  {"w2", Tensor({classes, s.hidden})},
                                  {"b2", Tensor({classes}, 0.0)}};
  scaled_uniform_fill(params[0].value, f, s.hidden, mix_seed(s.seed, 0));
  scaled_uniform_fill(params[2].value, s.hidden, classes, mix_seed(s.seed, 1));
  std::vector<NamedTensor*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  OptimizerState opt;
  opt.learning_rate = s.learning_rate;

  auto forward = [&](Tape& tape, const Tensor& x, bool trainable) {
    Var h = ops::relu(ops::linear(tape.constant(x), tape.parameter(params[0].value, trainable),
                                  tape.parameter(params[1].value, trainable)));
    return ops::linear(h, tape.parameter(params[2].value, trainable), tape.parameter(params[3].value, trainable));
  };

  const std::size_t batch = std::clamp<std::size_t>(s.batch_size, 2, n);
  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    for (const auto& idx : minibatches(n, batch, mix_seed(s.seed, epoch + 2))) {
      Tensor onehot({idx.size(), classes}, 0.0);
      for (std::size_t r = 0; r < idx.size(); ++r) onehot[r * classes + train_y[idx[r]]] = 1.0;
      for (auto* p : ptrs) p->value.zero_grad();
      Tape tape;
      Var z = ops::softmax(forward(tape, xtr.gather_rows(idx), true));
      Var ce = ops::sum(ops::mul(tape.constant(std::move(onehot)), ops::log(ops::clamp(z, kLogClampEps, 1.0))));
      tape.backward(ops::scale(ce, -1.0 / static_cast<double>(idx.size())));
      rmsprop_step(ptrs, opt);
    }
  }

  Tape tape;
  const Tensor logits = forward(tape, xte, false).value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    const double* row = logits.data().data() + i * classes;
    const auto pred = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    correct += pred == test_y[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

double probe(Encoder& encoder, const Dataset& train, const Dataset& test, ProbeFeature feature,
             const ProbeSettings& settings) {
  if (!train.truth() || !test.truth()) throw ContractError("probe needs ground truth on both splits");
  const Predictions a = predict(encoder, train), b = predict(encoder, test);
  const bool deep = feature == ProbeFeature::deep_tap;
  return probe_features(deep ? a.deep : a.penultimate, train.truth()->labels, deep ? b.deep : b.penultimate,
                        test.truth()->labels, settings);
}

}  // namespace dccm
