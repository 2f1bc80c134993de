#include <doctest.h>

#include <cmath>
#include <random>

#include "dccm/errors.hpp"
#include "dccm/gradcheck.hpp"
#include "dccm/gradient_suite.hpp"
#include "dccm/ops.hpp"
#include "dccm/rng.hpp"

using namespace dccm;

namespace {

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = d(gen);
  return t;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(t.row_size() == 3);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  t.enable_grad();
  CHECK(t.grad().size() == t.numel());
}

TEST_CASE("primitive examples") {
  Tape tape;
  const Var r = ops::relu(tape.constant(row({-1, 2, 0})));
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[1] == 2.0);
  CHECK(r.value()[2] == 0.0);

  CHECK(ops::softplus(tape.constant(Tensor::scalar(0.0))).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const Var s = ops::softmax(tape.constant(row({0, 0})));
  CHECK(s.value()[0] == doctest::Approx(0.5));
  CHECK(s.value()[1] == doctest::Approx(0.5));

  const Var c = ops::conv2d(tape.constant(Tensor({1, 1, 4, 4}, 1.0)), tape.constant(Tensor({1, 1, 3, 3}, 1.0)), Var{},
                            ops::Padding::valid);
  CHECK(c.value().shape() == Shape{1, 1, 2, 2});
  CHECK(c.value()[0] == 9.0);
  const Var same = ops::conv2d(tape.constant(Tensor({1, 1, 4, 4}, 1.0)), tape.constant(Tensor({1, 1, 5, 5}, 1.0)),
                               Var{}, ops::Padding::same);
  CHECK(same.value().shape() == Shape{1, 1, 4, 4});
  CHECK(same.value()[0] == 9.0);  // 3x3 of the 5x5 window overlaps the corner
}

TEST_CASE("forward values match their definitions") {
  Tape tape;
  const Tensor x = random_tensor({3, 4}, 7, 0.2, 2.0);
  const Var v = tape.constant(x);
  const Tensor lg = ops::log(v).value(), ex = ops::exp(v).value(), sq = ops::sqrt(v).value();
  const Tensor sp = ops::softplus(v).value(), cl = ops::clamp(v, 0.5, 1.5).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(lg[i] == doctest::Approx(std::log(x[i])).epsilon(1e-12));
    CHECK(ex[i] == doctest::Approx(std::exp(x[i])).epsilon(1e-12));
    CHECK(sq[i] == doctest::Approx(std::sqrt(x[i])).epsilon(1e-12));
    CHECK(sp[i] == doctest::Approx(std::log1p(std::exp(x[i]))).epsilon(1e-12));
    CHECK(cl[i] == std::clamp(x[i], 0.5, 1.5));
  }
  const Tensor n = ops::l2norm(v).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double ss = 0;
    for (std::size_t k = 0; k < 4; ++k) ss += x.at(r, k) * x.at(r, k);
    CHECK(n[r] == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
  }
  const Tensor m = ops::matmul(v, ops::transpose(v)).value();
  double dot = 0;
  for (std::size_t k = 0; k < 4; ++k) dot += x.at(0, k) * x.at(2, k);
  CHECK(m.at(0, 2) == doctest::Approx(dot).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions and shift invariant") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x = random_tensor({5, 7}, seed, -20.0, 20.0);
    Tape tape;
    const Tensor z = ops::softmax(tape.constant(x)).value();
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += 100.0;
    const Tensor zs = ops::softmax(tape.constant(shifted)).value();
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0;
      for (std::size_t k = 0; k < 7; ++k) {
        CHECK(z.at(r, k) >= 0.0);
        CHECK(std::abs(z.at(r, k) - zs.at(r, k)) < 1e-12);
        total += z.at(r, k);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("primitives are pure") {
  const Tensor x = random_tensor({2, 3, 6, 6}, 3), w = random_tensor({4, 3, 3, 3}, 4);
  Tape a, b;
  const Var ya = ops::maxpool2d(ops::conv2d(a.constant(x), a.constant(w), Var{}, ops::Padding::same), 2);
  const Var yb = ops::maxpool2d(ops::conv2d(b.constant(x), b.constant(w), Var{}, ops::Padding::same), 2);
  CHECK(ya.value().bitwise_equal(yb.value()));
}

TEST_CASE("shape and domain errors") {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}, 1.0)), b = tape.constant(Tensor({3, 2}, 1.0));
  CHECK_THROWS_AS(ops::add(a, b), DimensionError);
  CHECK_THROWS_AS(ops::matmul(a, a), DimensionError);
  CHECK_THROWS_AS(ops::conv2d(a, a, Var{}, ops::Padding::valid), DimensionError);
  CHECK_THROWS_AS(ops::log(tape.constant(row({1.0, -1.0}))), DomainError);
  CHECK_THROWS_AS(ops::log(tape.constant(row({0.0}))), DomainError);
  CHECK_THROWS_AS(ops::sqrt(tape.constant(row({-0.5}))), DomainError);
  CHECK_NOTHROW(ops::sqrt(tape.constant(row({0.0}))));
  try {
    ops::matmul(a, a);
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  // Broadcasting: equal extents or 1 on either side.
  CHECK(ops::add(a, tape.constant(Tensor({1, 3}, 2.0))).value().shape() == Shape{2, 3});
  CHECK(ops::mul(tape.constant(Tensor({2, 1}, 2.0)), tape.constant(Tensor({1, 3}, 2.0))).value().shape() ==
        Shape{2, 3});
}

TEST_CASE("apply_primitive dispatches by kind") {
  Tape tape;
  const Var x = tape.constant(row({-1, 2, 0}));
  const std::vector<Var> in{x};
  CHECK(ops::apply_primitive(Primitive::relu, in).value().bitwise_equal(ops::relu(x).value()));
  ops::Attrs attrs;
  attrs.factor = 3.0;
  CHECK(ops::apply_primitive(Primitive::scale, in, attrs).value()[1] == 6.0);
  CHECK_THROWS_AS(ops::apply_primitive(Primitive::add, in), ContractError);
}

TEST_CASE("backward examples") {
  SUBCASE("x squared") {
    Tape tape;
    const Var x = tape.variable(Tensor::scalar(3.0));
    tape.backward(ops::mul(x, x));
    CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
  }
  SUBCASE("sum of softmax has zero gradient") {
    Tape tape;
    const Var x = tape.variable(random_tensor({3, 5}, 11));
    tape.backward(ops::sum(ops::softmax(x)));
    for (double g : tape.grad(x)) CHECK(std::abs(g) < 1e-12);
  }
  SUBCASE("parameters accumulate into their grad slot") {
    Tensor w({2, 2}, 1.0);
    w.enable_grad();
    Tape tape;
    const Var p = tape.parameter(w);
    tape.backward(ops::sum(ops::add(p, p)));
    for (double g : w.grad()) CHECK(g == 2.0);
  }
  SUBCASE("untrainable parameters stay untouched") {
    Tensor w({2}, 1.0);
    w.enable_grad();
    Tape tape;
    tape.backward(ops::sum(ops::mul(tape.parameter(w, false), tape.variable(Tensor({2}, 3.0)))));
    for (double g : w.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("backward contract") {
  Tape tape;
  const Var x = tape.variable(Tensor({2}, 1.0));
  CHECK_THROWS_AS(tape.backward(ops::relu(x)), ContractError);
  const Var loss = ops::sum(x);
  tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), StaleGraphError);
  CHECK_THROWS_AS(ops::sum(x), StaleGraphError);

  Tape t1, t2;
  CHECK_THROWS_AS(ops::add(t1.constant(Tensor({2}, 1.0)), t2.constant(Tensor({2}, 1.0))), ContractError);
}

TEST_CASE("matmul relu mean chain matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor w = random_tensor({4, 3}, mix_seed(seed, 1));
    const Tensor x = random_tensor({5, 4}, mix_seed(seed, 2));
    const double err = gradient_check(
        [&](Tape& t, Var p) { return ops::mean(ops::relu(ops::matmul(t.constant(x), p))); }, w, 1e-5);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("gradient_check contract") {
  const Tensor p({3}, 0.5);
  CHECK(gradient_check([](Tape& t, Var) { return t.constant(Tensor::scalar(2.0)); }, p, 1e-5) == 0.0);
  CHECK_THROWS_AS(gradient_check([](Tape&, Var v) { return ops::sum(v); }, p, 0.0), ContractError);
  CHECK_THROWS_AS(gradient_check([](Tape&, Var v) { return ops::sum(v); }, p, 1e-2), ContractError);
  int calls = 0;
  CHECK_THROWS_AS(gradient_check(
                      [&](Tape& t, Var v) { return ops::add(ops::sum(v), t.constant(Tensor::scalar(++calls))); }, p,
                      1e-5),
                  ContractError);
}

TEST_CASE("every primitive passes the finite-difference check on 10 seeds") {
  for (const auto& gc : gradient_cases()) {
    if (!gc.primitive) continue;
    CAPTURE(gc.name);
    double worst = 0;
    for (std::uint64_t s = 0; s < 10; ++s) worst = std::max(worst, gc.run(mix_seed(s, 0x6C)));
    CHECK(worst < kPrimitiveTolerance);
  }
}
