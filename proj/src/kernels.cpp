#include "dccm/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace dccm::kernels {

namespace {

// Output rows [lo, hi) whose input row y + k - pad stays inside [0, extent).
struct Range {
  std::size_t lo;
  std::size_t hi;
};

Range valid_range(std::size_t k, std::size_t pad, std::size_t extent, std::size_t out_extent) {
  const auto lo = static_cast<std::int64_t>(pad) - static_cast<std::int64_t>(k);
  const auto hi = static_cast<std::int64_t>(extent) + static_cast<std::int64_t>(pad) - static_cast<std::int64_t>(k);
  Range r{static_cast<std::size_t>(std::max<std::int64_t>(lo, 0)),
          static_cast<std::size_t>(std::clamp<std::int64_t>(hi, 0, static_cast<std::int64_t>(out_extent)))};
  if (r.lo > r.hi) r.lo = r.hi;
  return r;
}

// Contribution of one input plane to one output plane. Shared by both
// variants so that the per-element accumulation order is identical.
inline void conv_plane_accumulate(const ConvGeometry& g, const double* in_plane, const double* w_plane,
                                  double* out_plane) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    const Range ry = valid_range(ky, g.pad, g.height, oh);
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const Range rx = valid_range(kx, g.pad, g.width, ow);
      const double wv = w_plane[ky * g.kernel_w + kx];
      for (std::size_t y = ry.lo; y < ry.hi; ++y) {
        const double* src = in_plane + (y + ky - g.pad) * g.width;
        double* dst = out_plane + y * ow;
        for (std::size_t x = rx.lo; x < rx.hi; ++x) dst[x] += wv * src[x + kx - g.pad];
      }
    }
  }
}

inline void conv_plane_backward_input(const ConvGeometry& g, const double* gout_plane, const double* w_plane,
                                      double* gin_plane) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    const Range ry = valid_range(ky, g.pad, g.height, oh);
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const Range rx = valid_range(kx, g.pad, g.width, ow);
      const double wv = w_plane[ky * g.kernel_w + kx];
      for (std::size_t y = ry.lo; y < ry.hi; ++y) {
        double* dst = gin_plane + (y + ky - g.pad) * g.width;
        const double* src = gout_plane + y * ow;
        for (std::size_t x = rx.lo; x < rx.hi; ++x) dst[x + kx - g.pad] += wv * src[x];
      }
    }
  }
}

inline double conv_weight_tap(const ConvGeometry& g, std::span<const double> grad_out,
                              std::span<const double> input, std::size_t o, std::size_t c, std::size_t ky,
                              std::size_t kx) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const Range ry = valid_range(ky, g.pad, g.height, oh);
  const Range rx = valid_range(kx, g.pad, g.width, ow);
  double acc = 0.0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* gout = grad_out.data() + (n * g.out_channels + o) * oh * ow;
    const double* in = input.data() + (n * g.in_channels + c) * g.height * g.width;
    for (std::size_t y = ry.lo; y < ry.hi; ++y) {
      const double* src = in + (y + ky - g.pad) * g.width;
      const double* go = gout + y * ow;
      for (std::size_t x = rx.lo; x < rx.hi; ++x) acc += go[x] * src[x + kx - g.pad];
    }
  }
  return acc;
}

inline void maxpool_plane(const PoolGeometry& g, std::size_t plane, std::span<const double> input,
                          std::span<double> output, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t in_base = plane * g.height * g.width;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t best = in_base + (y * g.stride) * g.width + x * g.stride;
      for (std::size_t dy = 0; dy < g.kernel; ++dy) {
        for (std::size_t dx = 0; dx < g.kernel; ++dx) {
          const std::size_t idx = in_base + (y * g.stride + dy) * g.width + x * g.stride + dx;
          if (input[idx] > input[best]) best = idx;
        }
      }
      const std::size_t o = (plane * oh + y) * ow + x;
      output[o] = input[best];
      argmax[o] = best;
    }
  }
}

inline void avgpool_plane(const PoolGeometry& g, std::size_t plane, std::span<const double> input,
                          std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const double inv = 1.0 / static_cast<double>(g.kernel * g.kernel);
  const double* in = input.data() + plane * g.height * g.width;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < g.kernel; ++dy) {
        for (std::size_t dx = 0; dx < g.kernel; ++dx) acc += in[(y * g.stride + dy) * g.width + x * g.stride + dx];
      }
      output[(plane * oh + y) * ow + x] = acc * inv;
    }
  }
}

// Pooling windows may overlap, so gradient is gathered per input element to
// keep the writes thread-private.
inline void avgpool_backward_plane(const PoolGeometry& g, std::size_t plane, std::span<const double> grad_out,
                                   std::span<double> grad_in) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const double inv = 1.0 / static_cast<double>(g.kernel * g.kernel);
  const double* go = grad_out.data() + plane * oh * ow;
  double* gi = grad_in.data() + plane * g.height * g.width;
  for (std::size_t iy = 0; iy < g.height; ++iy) {
    for (std::size_t ix = 0; ix < g.width; ++ix) {
      double acc = 0.0;
      for (std::size_t y = 0; y < oh; ++y) {
        if (iy < y * g.stride || iy >= y * g.stride + g.kernel) continue;
        for (std::size_t x = 0; x < ow; ++x) {
          if (ix < x * g.stride || ix >= x * g.stride + g.kernel) continue;
          acc += go[y * ow + x];
        }
      }
      gi[iy * g.width + ix] = acc * inv;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t plane_out = g.out_height() * g.out_width();
  const std::size_t plane_in = g.height * g.width;
  const std::size_t wsize = g.kernel_h * g.kernel_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* out = output.data() + (n * g.out_channels + o) * plane_out;
      std::fill(out, out + plane_out, bias.empty() ? 0.0 : bias[o]);
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        conv_plane_accumulate(g, input.data() + (n * g.in_channels + c) * plane_in,
                              weight.data() + (o * g.in_channels + c) * wsize, out);
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t plane_out = g.out_height() * g.out_width();
  const std::size_t plane_in = g.height * g.width;
  const std::size_t wsize = g.kernel_h * g.kernel_w;
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      double* gin = grad_in.data() + (n * g.in_channels + c) * plane_in;
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        conv_plane_backward_input(g, grad_out.data() + (n * g.out_channels + o) * plane_out,
                                  weight.data() + (o * g.in_channels + c) * wsize, gin);
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          grad_weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] =
              conv_weight_tap(g, grad_out, input, o, c, ky, kx);
        }
      }
    }
  }
  if (grad_bias.empty()) return;
  const std::size_t plane_out = g.out_height() * g.out_width();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* go = grad_out.data() + (n * g.out_channels + o) * plane_out;
      for (std::size_t i = 0; i < plane_out; ++i) acc += go[i];
    }
    grad_bias[o] = acc;
  }
}

void maxpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                       std::span<std::size_t> argmax) {
  for (std::size_t p = 0; p < g.planes; ++p) maxpool_plane(g, p, input, output, argmax);
}

void avgpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output) {
  for (std::size_t p = 0; p < g.planes; ++p) avgpool_plane(g, p, input, output);
}

void avgpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out, std::span<double> grad_in) {
  for (std::size_t p = 0; p < g.planes; ++p) avgpool_backward_plane(g, p, grad_out, grad_in);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------
namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  const auto total = static_cast<std::int64_t>(m * n);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const auto i = static_cast<std::size_t>(idx) / n;
    const auto j = static_cast<std::size_t>(idx) % n;
    const double* arow = a.data() + i * k;
    const double* brow = b.data() + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    c[i * n + j] = acc;
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t plane_out = g.out_height() * g.out_width();
  const std::size_t plane_in = g.height * g.width;
  const std::size_t wsize = g.kernel_h * g.kernel_w;
  const auto planes = static_cast<std::int64_t>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const auto n = static_cast<std::size_t>(pl) / g.out_channels;
    const auto o = static_cast<std::size_t>(pl) % g.out_channels;
    double* out = output.data() + static_cast<std::size_t>(pl) * plane_out;
    std::fill(out, out + plane_out, bias.empty() ? 0.0 : bias[o]);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      conv_plane_accumulate(g, input.data() + (n * g.in_channels + c) * plane_in,
                            weight.data() + (o * g.in_channels + c) * wsize, out);
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t plane_out = g.out_height() * g.out_width();
  const std::size_t plane_in = g.height * g.width;
  const std::size_t wsize = g.kernel_h * g.kernel_w;
  const auto planes = static_cast<std::int64_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const auto n = static_cast<std::size_t>(pl) / g.in_channels;
    const auto c = static_cast<std::size_t>(pl) % g.in_channels;
    double* gin = grad_in.data() + static_cast<std::size_t>(pl) * plane_in;
    std::fill(gin, gin + plane_in, 0.0);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      conv_plane_backward_input(g, grad_out.data() + (n * g.out_channels + o) * plane_out,
                                weight.data() + (o * g.in_channels + c) * wsize, gin);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const auto taps = static_cast<std::int64_t>(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < taps; ++t) {
    auto rest = static_cast<std::size_t>(t);
    const std::size_t kx = rest % g.kernel_w;
    rest /= g.kernel_w;
    const std::size_t ky = rest % g.kernel_h;
    rest /= g.kernel_h;
    const std::size_t c = rest % g.in_channels;
    const std::size_t o = rest / g.in_channels;
    grad_weight[static_cast<std::size_t>(t)] = conv_weight_tap(g, grad_out, input, o, c, ky, kx);
  }
  if (grad_bias.empty()) return;
  const std::size_t plane_out = g.out_height() * g.out_width();
  const auto outs = static_cast<std::int64_t>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t oo = 0; oo < outs; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    double acc = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* go = grad_out.data() + (n * g.out_channels + o) * plane_out;
      for (std::size_t i = 0; i < plane_out; ++i) acc += go[i];
    }
    grad_bias[o] = acc;
  }
}

void maxpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                       std::span<std::size_t> argmax) {
  const auto planes = static_cast<std::int64_t>(g.planes);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) maxpool_plane(g, static_cast<std::size_t>(p), input, output, argmax);
}

void avgpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output) {
  const auto planes = static_cast<std::int64_t>(g.planes);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) avgpool_plane(g, static_cast<std::size_t>(p), input, output);
}

void avgpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out, std::span<double> grad_in) {
  const auto planes = static_cast<std::int64_t>(g.planes);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) avgpool_backward_plane(g, static_cast<std::size_t>(p), grad_out, grad_in);
}

}  // namespace parallel

}  // namespace dccm::kernels
