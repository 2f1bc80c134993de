#include <doctest.h>

#include <cmath>
#include <random>

#include "dccm/errors.hpp"
#include "dccm/metrics.hpp"
#include "oracles.hpp"

using namespace dccm;

namespace {

Partition P(std::vector<std::size_t> l) { return Partition::from_labels(l); }

std::vector<std::uint8_t> flat(const std::vector<std::vector<bool>>& r) {
  std::vector<std::uint8_t> out;
  for (const auto& row : r)
    for (bool b : row) out.push_back(b ? 1 : 0);
  return out;
}

}  // namespace

TEST_CASE("partition construction") {
  CHECK_THROWS_AS(Partition({0, 2}, 2), ContractError);
  CHECK_THROWS_AS(Partition({0, 0}, 2), ContractError);
  const Partition p = P({7, 3, 7, 9});
  CHECK(p.assignment() == std::vector<std::size_t>{0, 1, 0, 2});
  CHECK(p.num_clusters() == 3);
  CHECK_THROWS_AS(contingency(P({0, 1}), P({0, 1, 1})), DimensionError);
}

TEST_CASE("nmi examples") {
  CHECK(nmi(P({0, 0, 1, 1}), P({1, 1, 0, 0})) == doctest::Approx(1.0));
  CHECK(std::abs(nmi(P({0, 0, 1, 1}), P({0, 1, 0, 1}))) < 1e-15);
  // [0,0,1] vs [0,1,1]: three occupied cells of mass 1/3, marginals (2/3, 1/3) and (1/3, 2/3).
  const double third = 1.0 / 3.0;
  const double mi = third * std::log(third / (2 * third * third)) + third * std::log(third / (2 * third * 2 * third)) +
                    third * std::log(third / (third * 2 * third));
  const double h = -(third * std::log(third) + 2 * third * std::log(2 * third));
  CHECK(nmi(P({0, 0, 1}), P({0, 1, 1})) == doctest::Approx(mi / h).epsilon(1e-12));
  CHECK(nmi(P({0, 0, 0}), P({0, 0, 0})) == 1.0);
  CHECK(nmi(P({0, 0, 0}), P({0, 1, 1})) == 0.0);
}

TEST_CASE("ari examples") {
  CHECK(ari(P({0, 1, 1, 2}), P({0, 1, 1, 2})) == doctest::Approx(1.0));
  CHECK(ari(P({0, 0, 0}), P({0, 0, 0})) == 1.0);
  // [0,0,1,1] vs [0,0,0,1] from the contingency table [[2,0],[1,1]].
  const double index = 1.0, sa = 2.0, sb = 3.0, pairs = 6.0;
  const double expected = sa * sb / pairs;
  CHECK(ari(P({0, 0, 1, 1}), P({0, 0, 0, 1})) == doctest::Approx((index - expected) / ((sa + sb) / 2 - expected)));
}

TEST_CASE("hungarian acc examples") {
  CHECK(hungarian_acc(P({1, 1, 0, 0}), P({0, 0, 1, 1})) == 1.0);
  CHECK(hungarian_acc(P({0, 1, 2}), P({0, 1, 2})) == 1.0);
  CHECK(hungarian_acc(P({0, 1, 0, 1}), P({0, 0, 1, 1})) == 0.5);
  // More clusters than classes: padded to square.
  CHECK(hungarian_acc(P({0, 1, 2, 3}), P({0, 0, 1, 1})) == 0.5);
  CHECK(hungarian_acc(P({0, 0, 0, 0}), P({0, 1, 2, 3})) == 0.25);
}

TEST_CASE("assignment solver is optimal on small matrices") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + trial % 6;
    std::vector<double> cost(n * n);
    for (auto& c : cost) c = d(gen);
    const auto assign = solve_assignment(cost, n);
    double got = 0;
    for (std::size_t i = 0; i < n; ++i) got += cost[i * n + assign[i]];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) v += cost[i * n + perm[i]];
      best = std::min(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("bcubed examples") {
  const Partition truth = P({0, 0, 1, 1});
  const BCubed same = bcubed(truth, truth);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  const BCubed singles = bcubed(P({0, 1, 2, 3}), truth);
  CHECK(singles.precision == 1.0);
  CHECK(singles.recall == 0.5);
  const BCubed one = bcubed(P({0, 0, 0, 0}), truth);
  CHECK(one.precision == 0.5);
  CHECK(one.recall == 1.0);

  std::vector<std::uint8_t> no_self(16, 1);
  no_self[5] = 0;
  CHECK_THROWS_AS(bcubed(no_self, truth), ContractError);
  CHECK_THROWS_AS(bcubed(std::vector<std::uint8_t>(9, 1), truth), DimensionError);
}

TEST_CASE("metrics match brute-force oracles on random partitions") {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> size(2, 30), clusters(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = size(gen);
    const auto a = oracle::compact(oracle::random_labels(n, clusters(gen), gen));
    const auto b = oracle::compact(oracle::random_labels(n, clusters(gen), gen));
    const Partition pa(a, *std::max_element(a.begin(), a.end()) + 1), pb(b, *std::max_element(b.begin(), b.end()) + 1);
    CAPTURE(trial);
    CHECK(std::abs(nmi(pa, pb) - oracle::nmi(a, b)) < 1e-9);
    CHECK(std::abs(ari(pa, pb) - oracle::ari(a, b)) < 1e-9);
    CHECK(std::abs(hungarian_acc(pa, pb) - oracle::acc(a, b)) < 1e-9);
    const oracle::PR ref = oracle::bcubed(oracle::relation_of(a), b);
    const BCubed got = bcubed(pa, pb);
    CHECK(std::abs(got.precision - ref.precision) < 1e-9);
    CHECK(std::abs(got.recall - ref.recall) < 1e-9);

    // Relation form with a random symmetric relation (not a partition).
    std::vector<std::vector<bool>> rel(n, std::vector<bool>(n));
    std::bernoulli_distribution e(0.3);
    for (std::size_t i = 0; i < n; ++i) {
      rel[i][i] = true;
      for (std::size_t j = i + 1; j < n; ++j) rel[i][j] = rel[j][i] = e(gen);
    }
    const oracle::PR rref = oracle::bcubed(rel, b);
    const BCubed rgot = bcubed(flat(rel), pb);
    CHECK(std::abs(rgot.precision - rref.precision) < 1e-9);
    CHECK(std::abs(rgot.recall - rref.recall) < 1e-9);
  }
}

TEST_CASE("relabel invariance and symmetry") {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = oracle::compact(oracle::random_labels(20, 4, gen));
    const auto b = oracle::compact(oracle::random_labels(20, 3, gen));
    std::vector<std::size_t> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<std::size_t> a2;
    for (auto v : a) a2.push_back(perm[v] + 10);
    const Partition pa = P(a), pa2 = P(a2), pb = P(b);
    CHECK(nmi(pa, pb) == doctest::Approx(nmi(pa2, pb)).epsilon(1e-12));
    CHECK(ari(pa, pb) == doctest::Approx(ari(pa2, pb)).epsilon(1e-12));
    CHECK(hungarian_acc(pa, pb) == doctest::Approx(hungarian_acc(pa2, pb)).epsilon(1e-12));
    CHECK(bcubed(pa, pb).precision == doctest::Approx(bcubed(pa2, pb).precision).epsilon(1e-12));
    CHECK(nmi(pa, pb) == doctest::Approx(nmi(pb, pa)).epsilon(1e-12));
    CHECK(ari(pa, pb) == doctest::Approx(ari(pb, pa)).epsilon(1e-12));
    CHECK(nmi(pa, pb) >= 0.0);
    CHECK(nmi(pa, pb) <= 1.0 + 1e-12);

    // Any fixed mapping scores no better than the optimum.
    std::size_t hit = 0;
    for (std::size_t i = 0; i < 20; ++i) hit += (a[i] + 1) % 4 == b[i];
    CHECK(hungarian_acc(pa, pb) >= static_cast<double>(hit) / 20.0);
  }
}
