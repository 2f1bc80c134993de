#include "dccm/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dccm/errors.hpp"
#include "dccm/ops.hpp"
#include "dccm/rng.hpp"

namespace dccm {

void TransformSpec::validate() const {
  if (rotation && !(max_degrees >= 0.0 && max_degrees <= 180.0)) {
    throw ConfigError("rotation max_degrees must lie in [0, 180]");
  }
  if (shift && !(max_fraction >= 0.0 && max_fraction < 1.0)) throw ConfigError("shift max_fraction must lie in [0, 1)");
  if (rescale && !(min_scale > 0.0 && min_scale <= max_scale)) {
    throw ConfigError("rescale needs 0 < min_scale <= max_scale");
  }
  if (flip && !(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("flip_probability must lie in [0, 1]");
  }
}

TransformSpec TransformSpec::all_default(std::uint64_t seed) {
  TransformSpec s;
  s.rotation = s.shift = s.rescale = s.flip = true;
  s.seed = seed;
  return s;
}

namespace {

AppliedTransform draw(const TransformSpec& spec, std::uint64_t stream, std::size_t dim, bool image) {
  std::mt19937_64 gen(stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(gen); };
  AppliedTransform t;
  if (spec.rotation) {
    t.degrees = uniform(-spec.max_degrees, spec.max_degrees);
    if (!image) {
      std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
      t.plane_a = pick(gen);
      do {
        t.plane_b = pick(gen);
      } while (t.plane_b == t.plane_a);
    }
  }
  if (spec.rescale) t.scale = uniform(spec.min_scale, spec.max_scale);
  if (spec.shift) {
    if (image) {
      t.shift_x = uniform(-spec.max_fraction, spec.max_fraction);
      t.shift_y = uniform(-spec.max_fraction, spec.max_fraction);
    } else {
      t.offset.resize(dim);
      for (auto& o : t.offset) o = uniform(-spec.max_fraction, spec.max_fraction);
    }
  }
  if (spec.flip && image) t.flipped = unit(gen) < spec.flip_probability;
  return t;
}

void transform_image(const double* src, double* dst, std::size_t channels, std::size_t h, std::size_t w,
                     const AppliedTransform& t) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double theta = t.degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double dx = t.shift_x * static_cast<double>(w), dy = t.shift_y * static_cast<double>(h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Undo flip, shift, scale, then rotation.
      double u = static_cast<double>(c) - cx;
      double v = static_cast<double>(r) - cy;
      if (t.flipped) u = -u;
      u = (u - dx) / t.scale;
      v = (v - dy) / t.scale;
      const double su = cs * u - sn * v + cx;
      const double sv = sn * u + cs * v + cy;
      const auto sc = static_cast<std::size_t>(std::clamp<double>(std::round(su), 0.0, static_cast<double>(w - 1)));
      const auto sr = static_cast<std::size_t>(std::clamp<double>(std::round(sv), 0.0, static_cast<double>(h - 1)));
      for (std::size_t ch = 0; ch < channels; ++ch) dst[(ch * h + r) * w + c] = src[(ch * h + sr) * w + sc];
    }
  }
}

void transform_vector(const double* src, double* dst, std::size_t dim, const AppliedTransform& t) {
  std::copy(src, src + dim, dst);
  if (t.plane_a != t.plane_b) {
    const double theta = t.degrees * std::numbers::pi / 180.0;
    const double a = dst[t.plane_a], b = dst[t.plane_b];
    dst[t.plane_a] = std::cos(theta) * a - std::sin(theta) * b;
    dst[t.plane_b] = std::sin(theta) * a + std::cos(theta) * b;
  }
  for (std::size_t j = 0; j < dim; ++j) dst[j] *= t.scale;
  if (!t.offset.empty()) {
    double ms = 0.0;
    for (std::size_t j = 0; j < dim; ++j) ms += src[j] * src[j];
    const double rms = std::sqrt(ms / static_cast<double>(dim));
    for (std::size_t j = 0; j < dim; ++j) dst[j] += t.offset[j] * rms;
  }
}

void require_image(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("image transform expects [B, C, H, W], got " + shape_str(x.shape()));
}

}  // namespace

TransformedBatch apply_transform(const Tensor& x, const TransformSpec& spec) {
  spec.validate();
  if (x.rank() != 4 && x.rank() != 2) {
    throw DimensionError("apply_transform expects [B, C, H, W] or [B, D], got " + shape_str(x.shape()));
  }
  TransformedBatch out{x, {}};
  const std::size_t b = x.dim(0);
  out.applied.resize(b);
  if (spec.is_identity()) return out;

  const bool image = x.rank() == 4;
  if (image && (x.dim(2) < 2 || x.dim(3) < 2)) {
    throw DimensionError("geometric transforms need H, W >= 2, got " + shape_str(x.shape()));
  }
  if (!image && spec.rotation && x.dim(1) < 2) throw DimensionError("vector rotation needs at least 2 coordinates");

  const std::size_t row = x.row_size();
  const double* src = x.data().data();
  double* dst = out.x.data().data();
#pragma omp parallel for schedule(static) if (b * row > 65536)
  for (std::size_t i = 0; i < b; ++i) {
    out.applied[i] = draw(spec, mix_seed(spec.seed, i), image ? 0 : row, image);
    if (image) {
      transform_image(src + i * row, dst + i * row, x.dim(1), x.dim(2), x.dim(3), out.applied[i]);
    } else {
      transform_vector(src + i * row, dst + i * row, row, out.applied[i]);
    }
  }
  return out;
}

Tensor apply_image_transform(const Tensor& x, const std::vector<AppliedTransform>& params) {
  require_image(x);
  if (params.size() != x.dim(0)) throw DimensionError("one parameter record per sample required");
  Tensor out(x.shape());
  const std::size_t row = x.row_size();
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    transform_image(x.data().data() + i * row, out.data().data() + i * row, x.dim(1), x.dim(2), x.dim(3), params[i]);
  }
  return out;
}

RobustnessLosses robustness_losses(Var z_t, const SimilarityMatrix& s_t, const PseudoGraph& w,
                                   const PseudoLabels& labels, double alpha) {
  const std::size_t b = z_t.value().dim(0);
  if (b != w.size() || b != labels.size() || s_t.s.value().dim(0) != b) {
    throw DimensionError("robustness_losses: transformed batch of " + std::to_string(b) + " vs supervision of " +
                         std::to_string(w.size()));
  }
  RobustnessLosses out;
  out.pg = pseudo_graph_loss(s_t, w);
  out.pl = pseudo_label_loss(z_t, labels);
  out.combined = combined_sample_loss(out.pg, out.pl, alpha);
  return out;
}

Var feature_invariance_loss(Var z, Var z_t) {
  if (z.value().shape() != z_t.value().shape()) {
    throw DimensionError("feature_invariance_loss: " + shape_str(z.value().shape()) + " vs " +
                         shape_str(z_t.value().shape()));
  }
  const double rows = static_cast<double>(z.value().dim(0));
  Var d = ops::sub(z, z_t);
  return ops::scale(ops::sum(ops::mul(d, d)), 1.0 / rows);
}

}  // namespace dccm
