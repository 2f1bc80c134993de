#include "dccm/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "dccm/errors.hpp"

namespace dccm {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kCifarRecord = kCifarPixels + 1;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }
  const std::string& bytes() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(u32()); }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw FormatError(what_ + ": implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = u64();
      if (d == 0) throw FormatError(what_ + ": zero tensor extent");
      n *= d;
    }
    need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = f64();
    return Tensor(std::move(shape), std::move(data));
  }
  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_) + ", expected " + std::to_string(n) +
                        " more bytes, found " + std::to_string(buf_.size() - pos_));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

Dataset::Dataset(std::string name, Shape sample_shape, std::vector<double> values, std::optional<GroundTruth> truth)
    : name_(std::move(name)), sample_shape_(std::move(sample_shape)), values_(std::move(values)),
      truth_(std::move(truth)) {
  const std::size_t per = shape_numel(sample_shape_);
  if (per == 0) throw DimensionError("dataset sample shape must be non-empty");
  if (values_.size() % per != 0) throw DimensionError("dataset values are not a whole number of samples");
  count_ = values_.size() / per;
  if (truth_) {
    if (truth_->labels.size() != count_) {
      throw DimensionError("dataset has " + std::to_string(count_) + " samples but " +
                           std::to_string(truth_->labels.size()) + " labels");
    }
    for (std::size_t l : truth_->labels) {
      if (l >= truth_->num_classes) throw DimensionError("label " + std::to_string(l) + " out of range");
    }
  }
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DegenerateInputError("empty batch");
  const std::size_t per = sample_size();
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  std::vector<double> out(indices.size() * per);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= count_) throw DimensionError("sample index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[r] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(r * per));
  }
  return Tensor(std::move(shape), std::move(out));
}

Tensor Dataset::all() const {
  if (count_ == 0) throw DegenerateInputError("dataset '" + name_ + "' is empty");
  Shape shape{count_};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  return Tensor(std::move(shape), values_);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t per = sample_size();
  std::vector<double> vals;
  vals.reserve(indices.size() * per);
  std::optional<GroundTruth> t;
  if (truth_) t = GroundTruth{{}, truth_->num_classes};
  for (std::size_t i : indices) {
    if (i >= count_) throw DimensionError("subset index out of range");
    vals.insert(vals.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * per),
                values_.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    if (t) t->labels.push_back(truth_->labels[i]);
  }
  Dataset out(name_, sample_shape_, std::move(vals), std::move(t));
  out.normalization_ = normalization_;
  return out;
}

Dataset Dataset::standardized() const {
  if (count_ == 0) return *this;
  const std::size_t per = sample_size();
  // Images normalise per channel, vectors per coordinate.
  const std::size_t groups = sample_shape_.size() == 3 ? sample_shape_[0] : per;
  const std::size_t span = per / groups;
  std::vector<double> mean(groups, 0.0), var(groups, 0.0);
  const double count = static_cast<double>(count_ * span);
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t j = 0; j < per; ++j) mean[j / span] += values_[i * per + j];
  }
  for (auto& m : mean) m /= count;
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t j = 0; j < per; ++j) {
      const double d = values_[i * per + j] - mean[j / span];
      var[j / span] += d * d;
    }
  }
  std::vector<double> sd(groups);
  for (std::size_t g = 0; g < groups; ++g) sd[g] = std::max(std::sqrt(var[g] / count), 1e-12);
  std::vector<double> vals(values_.size());
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t j = 0; j < per; ++j) vals[i * per + j] = (values_[i * per + j] - mean[j / span]) / sd[j / span];
  }
  Dataset out(name_, sample_shape_, std::move(vals), truth_);
  out.normalization_ = {"standardized", std::move(mean), std::move(sd)};
  out.warnings_ = warnings_;
  return out;
}

Dataset load_cifar_binary(const std::vector<fs::path>& paths) {
  std::vector<double> vals;
  GroundTruth truth{{}, 10};
  std::vector<std::string> warnings;
  for (const auto& path : paths) {
    const std::string bytes = read_file(path);
    if (bytes.size() % kCifarRecord != 0) {
      const std::size_t whole = bytes.size() / kCifarRecord * kCifarRecord;
      throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                        std::to_string(kCifarRecord) + "; partial record at byte offset " + std::to_string(whole));
    }
    if (bytes.empty()) warnings.push_back(path.string() + " holds no records");
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      const auto label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) {
        throw FormatError(path.string() + ": label byte " + std::to_string(label) + " at offset " +
                          std::to_string(off));
      }
      truth.labels.push_back(label);
      for (std::size_t p = 1; p < kCifarRecord; ++p) {
        vals.push_back(static_cast<double>(static_cast<unsigned char>(bytes[off + p])) / 255.0);
      }
    }
  }
  Dataset out("cifar10", {3, 32, 32}, std::move(vals), std::move(truth));
  out.set_normalization({"unit-range", {}, {}});
  for (auto& w : warnings) out.add_warning(std::move(w));
  return out;
}

Dataset select_classes(const Dataset& data, const std::vector<std::size_t>& classes, std::size_t max_per_class) {
  if (!data.truth()) throw ContractError("select_classes needs ground-truth labels");
  const auto& labels = data.truth()->labels;
  std::vector<std::size_t> taken(classes.size(), 0), picked, new_labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = std::find(classes.begin(), classes.end(), labels[i]);
    if (it == classes.end()) continue;
    const auto c = static_cast<std::size_t>(it - classes.begin());
    if (taken[c] == max_per_class) continue;
    ++taken[c];
    picked.push_back(i);
    new_labels.push_back(c);
  }
  Dataset sub = data.subset(picked);
  Dataset out(data.name(), data.sample_shape(), sub.values(), GroundTruth{std::move(new_labels), classes.size()});
  out.set_normalization(data.normalization());
  return out;
}

Dataset generate_blobs(const BlobParams& p) {
  if (p.k < 2) throw ContractError("blobs need K >= 2");
  if (!(p.sigma > 0.0)) throw ContractError("blobs need sigma > 0");
  if (p.dim == 0 || p.per_cluster == 0) throw ContractError("blobs need dim >= 1 and per_cluster >= 1");
  std::mt19937_64 gen(p.seed);
  std::uniform_real_distribution<double> box(-p.separation, p.separation);
  std::vector<std::vector<double>> centres;
  constexpr int kRetries = 1000;
  for (std::size_t c = 0; c < p.k; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kRetries && !placed; ++attempt) {
      std::vector<double> cand(p.dim);
      for (auto& v : cand) v = box(gen);
      placed = std::all_of(centres.begin(), centres.end(), [&](const std::vector<double>& other) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < p.dim; ++j) d2 += (cand[j] - other[j]) * (cand[j] - other[j]);
        return std::sqrt(d2) >= p.separation;
      });
      if (placed) centres.push_back(std::move(cand));
    }
    if (!placed) {
      throw DegenerateInputError("cannot place " + std::to_string(p.k) + " centres " + std::to_string(p.separation) +
                                 " apart in " + std::to_string(p.dim) + " dimensions");
    }
  }
  std::normal_distribution<double> noise(0.0, p.sigma);
  std::vector<double> vals;
  vals.reserve(p.k * p.per_cluster * p.dim);
  GroundTruth truth{{}, p.k};
  for (std::size_t c = 0; c < p.k; ++c) {
    for (std::size_t i = 0; i < p.per_cluster; ++i) {
      for (std::size_t j = 0; j < p.dim; ++j) vals.push_back(centres[c][j] + noise(gen));
      truth.labels.push_back(c);
    }
  }
  return Dataset("blobs", {p.dim}, std::move(vals), std::move(truth));
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2 || batch_size > n) {
    throw ContractError("batch size " + std::to_string(batch_size) + " outside [2, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw("DCCM");
  w.u32(Checkpoint::kVersion);
  w.str(ckpt.config_json);
  for (const auto* group : {&ckpt.parameters, &ckpt.optimizer_state}) {
    w.u32(static_cast<std::uint32_t>(group->size()));
    for (const auto& p : *group) {
      w.str(p.name);
      w.tensor(p.value);
    }
  }
  w.u64(ckpt.epoch);
  w.str(ckpt.rng_state);
  write_file_atomic(path, w.bytes());
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.raw(4) != "DCCM") throw FormatError(path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_json = r.str();
  for (auto* group : {&ckpt.parameters, &ckpt.optimizer_state}) {
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      group->push_back({std::move(name), r.tensor()});
    }
  }
  ckpt.epoch = r.u64();
  ckpt.rng_state = r.str();
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after offset " + std::to_string(r.position()));
  return ckpt;
}

void write_tensor(const fs::path& path, const Tensor& t) {
  ByteWriter w;
  w.raw("DTNS");
  w.tensor(t);
  write_file_atomic(path, w.bytes());
}

Tensor read_tensor(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.raw(4) != "DTNS") throw FormatError(path.string() + ": bad magic");
  Tensor t = r.tensor();
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after offset " + std::to_string(r.position()));
  return t;
}

namespace {

fs::path labels_path(const fs::path& path) {
  fs::path p = path;
  p += ".labels";
  return p;
}

}  // namespace

void write_dataset(const fs::path& path, const Dataset& data) {
  write_tensor(path, data.all());
  if (data.truth()) {
    const auto& labels = data.truth()->labels;
    std::vector<double> vals(labels.begin(), labels.end());
    write_tensor(labels_path(path), Tensor({labels.size()}, std::move(vals)));
  }
}

Dataset load_dataset(const fs::path& path) {
  if (path.extension() == ".bin") return load_cifar_binary({path});
  Tensor samples = read_tensor(path);
  if (samples.rank() < 2) throw FormatError(path.string() + ": expected [N, ...] samples");
  std::optional<GroundTruth> truth;
  if (fs::exists(labels_path(path))) {
    const Tensor lt = read_tensor(labels_path(path));
    GroundTruth gt;
    for (double v : lt.data()) {
      if (v < 0.0 || v != std::floor(v)) throw FormatError(labels_path(path).string() + ": labels must be integers");
      gt.labels.push_back(static_cast<std::size_t>(v));
      gt.num_classes = std::max(gt.num_classes, gt.labels.back() + 1);
    }
    truth = std::move(gt);
  }
  Shape sample(samples.shape().begin() + 1, samples.shape().end());
  return Dataset(path.stem().string(), std::move(sample), std::move(samples.storage()), std::move(truth));
}

}  // namespace dccm
