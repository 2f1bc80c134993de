#include <doctest.h>

#include <random>

#include "dccm/errors.hpp"
#include "dccm/gradcheck.hpp"
#include "dccm/model.hpp"
#include "dccm/ops.hpp"

using namespace dccm;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor t(shape);
  for (auto& v : t.data()) v = d(gen);
  return t;
}

struct Forward {
  Tensor z, deep, shallow;
};

Forward run(Encoder& enc, const Tensor& x) {
  Tape tape;
  const EncoderOutput out = enc.forward(tape, tape.constant(x), false);
  return {out.z.value(), out.deep.value(), out.shallow.value()};
}

void check_rows_are_distributions(const Tensor& z) {
  for (std::size_t r = 0; r < z.dim(0); ++r) {
    double total = 0;
    for (std::size_t k = 0; k < z.dim(1); ++k) {
      CHECK(z.at(r, k) >= 0.0);
      total += z.at(r, k);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

}  // namespace

TEST_CASE("conv encoder forward shapes and distribution rows") {
  Encoder enc(EncoderConfig::conv_default({3, 8, 8}, 10, 1));
  const Forward f = run(enc, random_tensor({4, 3, 8, 8}, 2));
  CHECK(f.z.shape() == Shape{4, 10});
  CHECK(f.deep.shape() == Shape{4, 64});
  CHECK(f.shallow.shape() == Shape{4, 32 * 4 * 4});
  CHECK(enc.deep_width() == 64);
  CHECK(enc.shallow_width() == 32 * 4 * 4);
  check_rows_are_distributions(f.z);
}

TEST_CASE("duplicate samples give identical rows and forwards are pure") {
  Encoder enc(EncoderConfig::mlp_default(6, 3, 9));
  Tensor x = random_tensor({4, 6}, 3);
  for (std::size_t j = 0; j < 6; ++j) x.at(3, j) = x.at(1, j);
  const Forward a = run(enc, x), b = run(enc, x);
  CHECK(a.z.bitwise_equal(b.z));
  CHECK(a.deep.bitwise_equal(b.deep));
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.z.at(1, k) == a.z.at(3, k));
  check_rows_are_distributions(a.z);
}

TEST_CASE("init is seeded") {
  const EncoderConfig c = EncoderConfig::mlp_default(64, 10, 5);
  const Encoder a = init_params(c, 5), b = init_params(c, 5), other = init_params(c, 6);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != other.checksum());
  const NamedTensor& last_w = a.parameters()[a.parameters().size() - 2];
  const NamedTensor& last_b = a.parameters().back();
  CHECK(last_w.value.shape() == Shape{10, 64});
  CHECK(last_b.value.shape() == Shape{10});

  Tensor w({10, 64});
  scaled_uniform_fill(w, 64, 10, 1);
  const double bound = std::sqrt(6.0 / 74.0);
  for (double v : w.data()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = EncoderConfig::mlp_default(4, 3, 0);
  CHECK_NOTHROW(c.validate());
  EncoderConfig swapped = c;
  std::swap(swapped.shallow_tap, swapped.deep_tap);
  CHECK_THROWS_AS(swapped.validate(), ConfigError);
  EncoderConfig wrong_head = c;
  wrong_head.layers.back().units = 4;
  CHECK_THROWS_AS(wrong_head.validate(), ConfigError);
  EncoderConfig conv_on_vector = c;
  conv_on_vector.layers.front() = LayerSpec{LayerKind::conv, 4};
  CHECK_THROWS_AS(conv_on_vector.validate(), ConfigError);
  CHECK_THROWS_AS(Encoder{swapped}, ConfigError);
  CHECK_THROWS_AS(parse_layer_kind("dropout"), ConfigError);
  CHECK(parse_layer_kind("maxpool") == LayerKind::maxpool);
}

TEST_CASE("batch shape mismatch is a dimension error") {
  Encoder enc(EncoderConfig::mlp_default(4, 3, 0));
  Tape tape;
  CHECK_THROWS_AS(enc.forward(tape, tape.constant(Tensor({2, 5}, 1.0))), DimensionError);
}

TEST_CASE("layers after the deep tap do not move the taps") {
  EncoderConfig c = EncoderConfig::mlp_default(5, 3, 4);
  EncoderConfig longer = c;
  longer.layers.insert(longer.layers.end() - 1, {LayerSpec{LayerKind::linear, 7}, LayerSpec{LayerKind::relu}});
  Encoder a(c), b(longer);
  const Tensor x = random_tensor({6, 5}, 8);
  const Forward fa = run(a, x), fb = run(b, x);
  CHECK(fa.deep.bitwise_equal(fb.deep));
  CHECK(fa.shallow.bitwise_equal(fb.shallow));
  CHECK(fb.z.shape() == Shape{6, 3});
}

TEST_CASE("discriminator") {
  SUBCASE("zero final layer scores 0") {
    Discriminator d(4, 3, 128, 1, true);
    Tape tape;
    const Var s = d.score(tape, tape.constant(random_tensor({8, 4}, 1)), tape.constant(random_tensor({8, 3}, 2)));
    CHECK(s.value().shape() == Shape{8});
    for (double v : s.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("dimension checks") {
    Discriminator d(4, 3, 16, 1);
    Tape tape;
    CHECK_THROWS_AS(d.score(tape, tape.constant(Tensor({8, 4})), tape.constant(Tensor({7, 3}))), DimensionError);
    CHECK_THROWS_AS(d.score(tape, tape.constant(Tensor({8, 5})), tape.constant(Tensor({8, 3}))), DimensionError);
  }
  SUBCASE("mean score gradient wrt d") {
    Discriminator d(4, 3, 16, 7);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& p : d.parameters()) {
      if (p.name.ends_with(".bias")) {
        for (auto& v : p.value.data()) v = u(gen);
      }
    }
    const Tensor deep = random_tensor({8, 4}, 5), shallow = random_tensor({8, 3}, 6);
    const double err = gradient_check(
        [&](Tape& t, Var p) { return ops::mean(d.score(t, p, t.constant(shallow), false)); }, deep, 1e-5);
    CHECK(err < 1e-6);
  }
}
