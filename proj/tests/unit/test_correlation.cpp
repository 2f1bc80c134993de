#include <doctest.h>

#include <cmath>
#include <random>

#include "dccm/correlation.hpp"
#include "dccm/errors.hpp"
#include "dccm/ops.hpp"

using namespace dccm;

namespace {

const double kLn2 = std::log(2.0);

double loss_value(const std::function<Var(Tape&)>& build) {
  Tape tape;
  return build(tape).value().item();
}

Tensor random_probs(std::size_t b, std::size_t k, std::uint64_t seed, double spread = 3.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(-spread, spread);
  Tensor logits({b, k});
  for (auto& v : logits.data()) v = d(gen);
  Tape t;
  return ops::softmax(t.constant(logits)).value();
}

PseudoGraph graph_from(std::size_t n, std::vector<std::uint8_t> w) { return PseudoGraph(n, std::move(w), 0.5); }

}  // namespace

TEST_CASE("cosine similarity examples") {
  const Tensor z = Tensor::from_rows({{1, 0}, {1, 0}, {0, 1}, {0.9, 0.1}, {0.8, 0.2}});
  const Tensor s = cosine_similarity_values(z);
  CHECK(s.at(0, 1) == doctest::Approx(1.0));
  CHECK(s.at(0, 2) == doctest::Approx(0.0));
  const double expected = (0.72 + 0.02) / (std::sqrt(0.82) * std::sqrt(0.68));
  CHECK(s.at(3, 4) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.at(3, 4) == doctest::Approx(0.9910).epsilon(1e-4));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(s.at(i, i) - 1.0) < 1e-9);
    for (std::size_t j = 0; j < 5; ++j) CHECK(s.at(i, j) == s.at(j, i));
  }
  const PseudoGraph w = build_pseudo_graph(s, 0.95);
  CHECK(w.edge(0, 1));
  CHECK_FALSE(w.edge(0, 2));
  CHECK(w.edge(3, 4));

  CHECK_THROWS_AS(cosine_similarity_values(Tensor::from_rows({{1, 0}, {0, 0}})), DegenerateInputError);
  Tape tape;
  CHECK_THROWS_AS(cosine_similarity(tape.constant(Tensor::from_rows({{0, 0}, {1, 0}}))), DegenerateInputError);
}

TEST_CASE("differentiable and detached similarity agree") {
  const Tensor z = random_probs(6, 4, 1);
  Tape tape;
  const Tensor a = cosine_similarity(tape.constant(z)).s.value();
  const Tensor b = cosine_similarity_values(z);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("cosine similarity is scale invariant per sample") {
  const Tensor z = random_probs(7, 5, 2);
  Tensor scaled = z;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> c(0.01, 50.0);
  for (std::size_t r = 0; r < 7; ++r) {
    const double f = c(gen);
    for (std::size_t k = 0; k < 5; ++k) scaled.at(r, k) *= f;
  }
  const Tensor a = cosine_similarity_values(z), b = cosine_similarity_values(scaled);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("pseudo graph structure and monotonicity in thres1") {
  CHECK_THROWS_AS(build_pseudo_graph(Tensor({2, 2}, 1.0), 0.0), ContractError);
  CHECK_THROWS_AS(build_pseudo_graph(Tensor({2, 2}, 1.0), 1.0), ContractError);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor s = cosine_similarity_values(random_probs(10, 3, seed));
    PseudoGraph prev = build_pseudo_graph(s, 0.05);
    for (double t : {0.3, 0.6, 0.9, 0.95, 0.99}) {
      const PseudoGraph w = build_pseudo_graph(s, t);
      for (std::size_t i = 0; i < 10; ++i) {
        CHECK(w.edge(i, i));
        for (std::size_t j = 0; j < 10; ++j) {
          CHECK(w.edge(i, j) == w.edge(j, i));
          CHECK(w.edge(i, j) == (i == j || s.at(i, j) >= t));
          if (w.edge(i, j)) CHECK(prev.edge(i, j));
        }
      }
      prev = w;
    }
  }
}

TEST_CASE("pseudo label examples") {
  const PseudoLabels a = assign_pseudo_labels(Tensor::from_rows({{0.2, 0.7, 0.1}, {0.95, 0.03, 0.02}}), 0.9);
  CHECK(a.label == std::vector<std::size_t>{1, 0});
  CHECK(a.confidence[0] == 0.7);
  CHECK(a.confidence[1] == 0.95);
  CHECK(a.selected == std::vector<std::uint8_t>{0, 1});
  CHECK(a.selected_count() == 1);

  const PseudoLabels tie = assign_pseudo_labels(Tensor::from_rows({{0.5, 0.5}}), 0.5);
  CHECK(tie.label[0] == 0);
  CHECK(tie.confidence[0] == 0.5);
  CHECK(tie.selected[0] == 1);
}

TEST_CASE("pseudo labels: argmax invariance and thres2 monotonicity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor z = random_probs(12, 4, seed, 5.0);
    Tensor scaled = z;
    for (auto& v : scaled.data()) v *= 3.7;
    CHECK(assign_pseudo_labels(z, 0.9).label == assign_pseudo_labels(scaled, 0.9).label);
    std::vector<std::uint8_t> prev(12, 1);
    for (double t : {0.3, 0.5, 0.7, 0.9, 0.99}) {
      const PseudoLabels l = assign_pseudo_labels(z, t);
      for (std::size_t i = 0; i < 12; ++i) CHECK(l.selected[i] <= prev[i]);
      prev = l.selected;
    }
  }
}

TEST_CASE("pseudo graph loss examples") {
  SUBCASE("single pair at 0.5 is ln 2 either way") {
    const Tensor s = Tensor::from_rows({{1, 0.5}, {0.5, 1}});
    for (std::uint8_t e : {std::uint8_t{0}, std::uint8_t{1}}) {
      const PseudoGraph w = graph_from(2, {1, e, e, 1});
      const double v = loss_value([&](Tape& t) { return pseudo_graph_loss({t.constant(s)}, w); });
      CHECK(v == doctest::Approx(kLn2).epsilon(1e-12));
    }
  }
  SUBCASE("perfect graph is zero up to clamp") {
    const Tensor s = Tensor::from_rows({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}});
    const PseudoGraph w = graph_from(3, {1, 1, 0, 1, 1, 0, 0, 0, 1});
    const double v = loss_value([&](Tape& t) { return pseudo_graph_loss({t.constant(s)}, w); });
    CHECK(v >= 0.0);
    CHECK(v < 2e-7);
  }
  SUBCASE("brute-force mean over ordered pairs") {
    const Tensor s = cosine_similarity_values(random_probs(6, 3, 9));
    const PseudoGraph w = build_pseudo_graph(s, 0.7);
    double expect = 0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        if (i == j) continue;
        const double c = std::clamp(s.at(i, j), kLogClampEps, 1 - kLogClampEps);
        expect += w.edge(i, j) ? -std::log(c) : -std::log(1 - c);
      }
    expect /= 30;
    const double v = loss_value([&](Tape& t) { return pseudo_graph_loss({t.constant(s)}, w); });
    CHECK(v == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("fewer than two samples") {
    const PseudoGraph w = graph_from(1, {1});
    Tape tape;
    CHECK_THROWS_AS(pseudo_graph_loss({tape.constant(Tensor({1, 1}, 1.0))}, w), DegenerateBatchError);
  }
}

TEST_CASE("pseudo label loss examples") {
  const auto value = [](const Tensor& z, const PseudoLabels& l) {
    return loss_value([&](Tape& t) { return pseudo_label_loss(t.constant(z), l); });
  };
  PseudoLabels one;
  one.label = {0};
  one.confidence = {1.0};
  one.selected = {1};
  CHECK(value(Tensor::from_rows({{1, 0}}), one) < 2e-7);
  CHECK(value(Tensor::from_rows({{0.5, 0.5}}), one) == doctest::Approx(kLn2).epsilon(1e-12));
  one.selected = {0};
  CHECK(value(Tensor::from_rows({{0.5, 0.5}}), one) == 0.0);

  // Normalised by the number selected.
  PseudoLabels two;
  two.label = {0, 1, 1};
  two.confidence = {0.5, 0.25, 0.9};
  two.selected = {1, 1, 0};
  const Tensor z = Tensor::from_rows({{0.5, 0.5}, {0.75, 0.25}, {0.1, 0.9}});
  CHECK(value(z, two) == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2).epsilon(1e-12));
}

TEST_CASE("losses are minimised by a graph-consistent one-hot prediction") {
  const Tensor z = Tensor::from_rows({{1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Tensor s = cosine_similarity_values(z);
  const PseudoGraph w = build_pseudo_graph(s, 0.95);
  const PseudoLabels l = assign_pseudo_labels(z, 0.9);
  const double at_min = loss_value([&](Tape& t) { return pseudo_graph_loss({t.constant(s)}, w); }) +
                        loss_value([&](Tape& t) { return pseudo_label_loss(t.constant(z), l); });
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor other = random_probs(4, 3, seed);
    const double v = loss_value([&](Tape& t) { return pseudo_graph_loss(cosine_similarity(t.constant(other)), w); }) +
                     loss_value([&](Tape& t) { return pseudo_label_loss(t.constant(other), l); });
    CHECK(at_min < v);
  }
}

TEST_CASE("combined and total loss arithmetic") {
  CHECK(combined_sample_loss(1.0, 0.0, 5) == 1.0);
  CHECK(combined_sample_loss(0.0, 1.0, 5) == 5.0);
  CHECK(combined_sample_loss(0.7, 0.2, 5) == doctest::Approx(1.7).epsilon(1e-12));

  LossBreakdown p;
  CHECK(total_loss(p) == 0.0);
  p.l_pg = p.l_pg_prime = p.l_pl = p.l_pl_prime = p.l_mi = 1.0;
  CHECK(total_loss(p) == doctest::Approx(12.1).epsilon(1e-12));
  p.beta = 0.0;
  CHECK(total_loss(p) == doctest::Approx(combined_sample_loss(1, 1, 5) * 2).epsilon(1e-12));

  p.l_mi = std::nan("");
  try {
    total_loss(p);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("l_mi") != std::string::npos);
  }
}

TEST_CASE("triplet sampling") {
  const std::size_t n = 6;
  const Tensor s = cosine_similarity_values(random_probs(n, 3, 5));

  SUBCASE("identity graph falls back to self-pairs") {
    std::vector<std::uint8_t> eye(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1;
    const TripletBatch t = sample_triplet_pairs(graph_from(n, eye), s, SamplingStrategy::nearest_pos_random_neg, n, 1);
    CHECK(t.joint.size() == n);
    for (const auto& p : t.joint) CHECK(p.deep == p.shallow);
  }
  SUBCASE("all-ones graph has no negatives") {
    for (auto strat : {SamplingStrategy::nearest_pos_random_neg, SamplingStrategy::nearest_pos_farthest_neg,
                       SamplingStrategy::random_pos_random_neg, SamplingStrategy::topn_pos_random_neg}) {
      CHECK_THROWS_AS(sample_triplet_pairs(graph_from(4, std::vector<std::uint8_t>(16, 1)),
                                           cosine_similarity_values(random_probs(4, 3, 1)), strat, 4, 1),
                      DegenerateBatchError);
    }
  }
  SUBCASE("pairs respect the graph and are deterministic") {
    const PseudoGraph w = build_pseudo_graph(s, 0.8);
    for (auto strat : {SamplingStrategy::nearest_pos_random_neg, SamplingStrategy::nearest_pos_farthest_neg,
                       SamplingStrategy::random_pos_random_neg, SamplingStrategy::topn_pos_random_neg}) {
      CAPTURE(sampling_strategy_name(strat));
      CHECK(parse_sampling_strategy(sampling_strategy_name(strat)) == strat);
      TripletBatch a;
      try {
        a = sample_triplet_pairs(w, s, strat, n, 42);
      } catch (const DegenerateBatchError&) {
        continue;
      }
      const TripletBatch b = sample_triplet_pairs(w, s, strat, n, 42);
      for (const auto& p : a.joint) CHECK(w.edge(p.deep, p.shallow));
      for (const auto& p : a.marginal) CHECK_FALSE(w.edge(p.deep, p.shallow));
      CHECK(a.joint.size() == b.joint.size());
      for (std::size_t i = 0; i < a.joint.size(); ++i) CHECK(a.joint[i].shallow == b.joint[i].shallow);
      for (std::size_t i = 0; i < a.marginal.size(); ++i) CHECK(a.marginal[i].shallow == b.marginal[i].shallow);
      if (strat != SamplingStrategy::topn_pos_random_neg) {
        CHECK(a.joint.size() == a.marginal.size());
        CHECK(a.joint.size() + a.skipped_anchors == n);
      }
    }
  }
  SUBCASE("nearest positive is the most similar neighbour") {
    // Two pairs {0,1} and {2,3} plus a similar outsider 4 linked to 0.
    const Tensor sim = Tensor::from_rows({{1, .99, .1, .1, .97},
                                          {.99, 1, .1, .1, .5},
                                          {.1, .1, 1, .98, .1},
                                          {.1, .1, .98, 1, .1},
                                          {.97, .5, .1, .1, 1}});
    const PseudoGraph w = build_pseudo_graph(sim, 0.95);
    const TripletBatch t = sample_triplet_pairs(w, sim, SamplingStrategy::nearest_pos_farthest_neg, 5, 3);
    for (const auto& p : t.joint) {
      if (p.deep == 0) CHECK(p.shallow == 1);
      if (p.deep == 2) CHECK(p.shallow == 3);
    }
    for (const auto& p : t.marginal) {
      if (p.deep == 0) CHECK((p.shallow == 2 || p.shallow == 3));
    }
  }
  SUBCASE("contract on n") {
    const PseudoGraph w = build_pseudo_graph(s, 0.8);
    CHECK_THROWS_AS(sample_triplet_pairs(w, s, SamplingStrategy::nearest_pos_random_neg, 0, 1), ContractError);
    CHECK_THROWS_AS(sample_triplet_pairs(w, s, SamplingStrategy::nearest_pos_random_neg, n + 1, 1), ContractError);
  }
  CHECK_THROWS_AS(parse_sampling_strategy("hardest"), ConfigError);
}

TEST_CASE("triplet MI loss closed forms") {
  const std::size_t n = 4;
  TripletBatch pairs;
  pairs.joint = {{0, 0}, {1, 1}, {2, 3}};
  pairs.marginal = {{0, 2}, {1, 3}};
  const Tensor deep = random_probs(n, 3, 1), shallow = random_probs(n, 5, 2);

  Discriminator zero(3, 5, 8, 1, true);
  const double at_zero = loss_value([&](Tape& t) {
    return triplet_mi_loss(zero, t.constant(deep), t.constant(shallow), pairs);
  });
  CHECK(at_zero == doctest::Approx(2 * kLn2).epsilon(1e-12));

  // Constant score c through the final bias.
  const auto sp = [](double x) { return std::log1p(std::exp(x)); };
  for (double c : {-3.0, 0.5, 4.0}) {
    Discriminator d(3, 5, 8, 1, true);
    d.parameters().back().value[0] = c;
    const double v = loss_value([&](Tape& t) { return triplet_mi_loss(d, t.constant(deep), t.constant(shallow), pairs); });
    CHECK(v == doctest::Approx(sp(-c) + sp(c)).epsilon(1e-12));
    CHECK(v >= 0.0);
  }
  Discriminator big(3, 5, 8, 1, true);
  big.parameters().back().value[0] = 40.0;
  // Large on joint and marginal alike: the marginal term dominates.
  const double large = loss_value([&](Tape& t) { return triplet_mi_loss(big, t.constant(deep), t.constant(shallow), pairs); });
  CHECK(large == doctest::Approx(40.0).epsilon(1e-9));

  TripletBatch empty = pairs;
  empty.marginal.clear();
  Tape tape;
  CHECK_THROWS_AS(triplet_mi_loss(zero, tape.constant(deep), tape.constant(shallow), empty), DegenerateBatchError);
}

TEST_CASE("MI loss vanishes when joint scores are high and marginal scores low") {
  // Discriminator that reads the first deep coordinate: joint rows have a large
  // positive entry, marginal rows a large negative one.
  Discriminator d(1, 1, 1, 1, true);
  auto& p = d.parameters();
  // disc0: [1 x 2], disc1: [1 x 1], disc2: [1 x 1]
  p[0].value = Tensor({1, 2}, std::vector<double>{1.0, 0.0});
  p[1].value = Tensor({1}, 0.0);
  p[2].value = Tensor({1, 1}, 1.0);
  p[3].value = Tensor({1}, 0.0);
  p[4].value = Tensor({1, 1}, 1.0);
  p[5].value = Tensor({1}, -30.0);
  const Tensor deep = Tensor::from_rows({{60}, {0}});
  const Tensor shallow = Tensor::from_rows({{0}, {0}});
  TripletBatch pairs;
  pairs.joint = {{0, 0}};
  pairs.marginal = {{1, 1}};
  const double v = loss_value([&](Tape& t) { return triplet_mi_loss(d, t.constant(deep), t.constant(shallow), pairs); });
  CHECK(v < 1e-12);
}
