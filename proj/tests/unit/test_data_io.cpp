#include <doctest.h>

#include <fstream>
#include <set>

#include "dccm/data_io.hpp"
#include "dccm/errors.hpp"
#include "dccm/metrics.hpp"
#include "tempdir.hpp"

using namespace dccm;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> cifar_records(const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> out;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out.push_back(labels[r]);
    for (std::size_t i = 0; i < 3072; ++i) out.push_back(static_cast<unsigned char>((i + r) % 256));
  }
  return out;
}

}  // namespace

TEST_CASE("cifar binary loader") {
  TempDir dir;
  SUBCASE("two records") {
    write_bytes(dir / "a.bin", cifar_records({3, 7}));
    const Dataset d = load_cifar_binary({dir / "a.bin"});
    CHECK(d.size() == 2);
    CHECK(d.sample_shape() == Shape{3, 32, 32});
    CHECK(d.truth()->labels == std::vector<std::size_t>{3, 7});
    CHECK(d.values()[0] == 0.0);
    CHECK(d.values()[255] == doctest::Approx(1.0));
    CHECK(d.values()[3072] == doctest::Approx(1.0 / 255.0));
    CHECK(d.normalization().kind == "unit-range");
  }
  SUBCASE("empty file warns") {
    write_bytes(dir / "e.bin", {});
    const Dataset d = load_cifar_binary({dir / "e.bin"});
    CHECK(d.size() == 0);
    CHECK(d.warnings().size() == 1);
  }
  SUBCASE("misaligned size") {
    write_bytes(dir / "m.bin", std::vector<unsigned char>(3072, 0));
    CHECK_THROWS_AS(load_cifar_binary({dir / "m.bin"}), FormatError);
  }
  SUBCASE("label out of range names the offset") {
    write_bytes(dir / "l.bin", cifar_records({1, 12}));
    try {
      load_cifar_binary({dir / "l.bin"});
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("3073") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_cifar_binary({dir / "none.bin"}), FormatError); }
  SUBCASE("class selection") {
    write_bytes(dir / "s.bin", cifar_records({0, 5, 3, 5, 3, 3}));
    const Dataset d = select_classes(load_cifar_binary({dir / "s.bin"}), {3, 5}, 2);
    CHECK(d.size() == 4);
    CHECK(d.truth()->labels == std::vector<std::size_t>{1, 0, 1, 0});
    CHECK(d.truth()->num_classes == 2);
  }
}

TEST_CASE("blob generator") {
  BlobParams p;
  p.seed = 5;
  const Dataset a = generate_blobs(p), b = generate_blobs(p);
  CHECK(a.size() == 400);
  CHECK(a.sample_shape() == Shape{16});
  CHECK(a.values() == b.values());
  p.seed = 6;
  CHECK(generate_blobs(p).values() != a.values());

  // Nearly noiseless clusters: nearest-centre assignment recovers every label.
  BlobParams tight{2, 50, 8, 10.0, 0.01, 1};
  const Dataset t = generate_blobs(tight);
  std::vector<std::vector<double>> centre(2, std::vector<double>(8, 0.0));
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < 8; ++j) centre[t.truth()->labels[i]][j] += t.values()[i * 8 + j] / 50.0;
  std::vector<std::size_t> pred;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double best = 1e300;
    std::size_t arg = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < 8; ++j) d += std::pow(t.values()[i * 8 + j] - centre[c][j], 2);
      if (d < best) best = d, arg = c;
    }
    pred.push_back(arg);
  }
  CHECK(hungarian_acc(Partition::from_labels(pred), Partition::from_labels(t.truth()->labels)) == 1.0);

  BlobParams bad;
  bad.k = 1;
  CHECK_THROWS_AS(generate_blobs(bad), ContractError);
}

TEST_CASE("minibatches") {
  const auto b = minibatches(10, 4, 3);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  std::set<std::size_t> all;
  for (const auto& chunk : b) all.insert(chunk.begin(), chunk.end());
  CHECK(all.size() == 10);
  CHECK(minibatches(10, 4, 3) == b);
  CHECK(minibatches(10, 4, 4) != b);
  CHECK(minibatches(9, 4, 3).size() == 2);  // a lone remainder is dropped
  CHECK_THROWS_AS(minibatches(10, 1, 0), ContractError);
  CHECK_THROWS_AS(minibatches(3, 4, 0), ContractError);
}

TEST_CASE("dataset views") {
  const Dataset d("toy", {2}, {1, 2, 3, 4, 5, 6}, GroundTruth{{0, 1, 0}, 2});
  const std::vector<std::size_t> idx{2, 0};
  CHECK(d.batch(idx).storage() == std::vector<double>{5, 6, 1, 2});
  const Dataset s = d.subset(idx);
  CHECK(s.truth()->labels == std::vector<std::size_t>{0, 0});
  const Dataset z = d.standardized();
  double mean = 0;
  for (std::size_t i = 0; i < 3; ++i) mean += z.values()[i * 2];
  CHECK(std::abs(mean) < 1e-12);
  CHECK(z.normalization().kind == "standardized");
  CHECK_THROWS_AS(Dataset("bad", {2}, {1, 2, 3}, std::nullopt), DimensionError);
  CHECK_THROWS_AS(Dataset("bad", {1}, {1, 2}, GroundTruth{{0, 2}, 2}), DimensionError);
  CHECK_THROWS_AS(Dataset("e", {2}, {}, std::nullopt).all(), DegenerateInputError);
}

TEST_CASE("checkpoint round trip and corruption") {
  TempDir dir;
  Checkpoint c;
  c.config_json = R"({"seed": 3})";
  Tensor w({2, 3});
  for (std::size_t i = 0; i < 6; ++i) w[i] = 0.1 * static_cast<double>(i) - 0.25;
  c.parameters = {{"layer0.weight", w}, {"layer0.bias", Tensor({2}, -1e-300)}};
  c.optimizer_state = {{"layer0.weight", Tensor({2, 3}, 7.0)}};
  c.epoch = 12;
  c.rng_state = "1 2 3";
  save_checkpoint(dir / "c.bin", c);
  CHECK_FALSE(fs::exists(dir / "c.bin.tmp"));

  const Checkpoint r = load_checkpoint(dir / "c.bin");
  CHECK(r.config_json == c.config_json);
  CHECK(r.epoch == 12);
  CHECK(r.rng_state == "1 2 3");
  REQUIRE(r.parameters.size() == 2);
  CHECK(r.parameters[0].name == "layer0.weight");
  CHECK(r.parameters[0].value.bitwise_equal(w));
  CHECK(r.parameters[1].value.bitwise_equal(c.parameters[1].value));
  CHECK(r.optimizer_state[0].value.bitwise_equal(c.optimizer_state[0].value));

  auto bytes = read_bytes(dir / "c.bin");
  bytes[0] ^= 0xFF;
  write_bytes(dir / "bad.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.bin"), FormatError);

  bytes[0] ^= 0xFF;
  bytes.resize(bytes.size() - 5);
  write_bytes(dir / "short.bin", bytes);
  try {
    load_checkpoint(dir / "short.bin");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
}

TEST_CASE("tensor and dataset files") {
  TempDir dir;
  const Tensor t({2, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, -0.5});
  write_tensor(dir / "t.dtns", t);
  CHECK(read_tensor(dir / "t.dtns").bitwise_equal(t));

  BlobParams p{3, 5, 4, 10.0, 1.0, 2};
  const Dataset d = generate_blobs(p);
  write_dataset(dir / "blobs.dtns", d);
  const Dataset back = load_dataset(dir / "blobs.dtns");
  CHECK(back.values() == d.values());
  CHECK(back.truth()->labels == d.truth()->labels);
  fs::remove(dir / "blobs.dtns.labels");
  CHECK_FALSE(load_dataset(dir / "blobs.dtns").truth().has_value());

  write_bytes(dir / "junk.dtns", {'D', 'T', 'N', 'X'});
  CHECK_THROWS_AS(read_tensor(dir / "junk.dtns"), FormatError);
}
