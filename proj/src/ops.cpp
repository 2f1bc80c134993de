#include "dccm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dccm/errors.hpp"
#include "dccm/kernels.hpp"

namespace dccm::ops {

namespace {

namespace kn = dccm::kernels::parallel;

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operand is not bound to a tape");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw ContractError("operands belong to different tapes");
  return t;
}

[[noreturn]] void dim_error(Primitive kind, const std::string& what) {
  throw DimensionError(std::string(primitive_name(kind)) + ": " + what);
}

void accumulate(Tape& t, std::size_t id, std::span<const double> g) {
  if (!t.requires_grad(id)) return;
  auto& buf = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

// ---- broadcasting -----------------------------------------------------------

struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia;  // flat index into a for every output element
  std::vector<std::size_t> ib;
};

Broadcast plan_broadcast(Primitive kind, const Shape& a, const Shape& b) {
  Broadcast p;
  const std::size_t na = shape_numel(a), nb = shape_numel(b);
  if (a == b) {
    p.out = a;
    p.ia.resize(na);
    for (std::size_t i = 0; i < na; ++i) p.ia[i] = i;
    p.ib = p.ia;
    return p;
  }
  if (nb == 1) {
    p.out = a;
    p.ia.resize(na);
    for (std::size_t i = 0; i < na; ++i) p.ia[i] = i;
    p.ib.assign(na, 0);
    return p;
  }
  if (na == 1) {
    p.out = b;
    p.ib.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) p.ib[i] = i;
    p.ia.assign(nb, 0);
    return p;
  }
  if (a.size() != b.size()) dim_error(kind, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  const std::size_t rank = a.size();
  p.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (a[d] != b[d] && a[d] != 1 && b[d] != 1) {
      dim_error(kind, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[d] = std::max(a[d], b[d]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = a[d] == 1 ? 0 : ra;
    sb[d] = b[d] == 1 ? 0 : rb;
    ra *= a[d];
    rb *= b[d];
  }
  const std::size_t n = shape_numel(p.out);
  p.ia.resize(n);
  p.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t fa = 0, fb = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      fa += idx[d] * sa[d];
      fb += idx[d] * sb[d];
    }
    p.ia[o] = fa;
    p.ib[o] = fb;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < p.out[d]) break;
      idx[d] = 0;
    }
  }
  return p;
}

template <typename Forward, typename DA, typename DB>
Var binary(Primitive kind, Var a, Var b, Forward f, DA da, DB db) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Broadcast plan = plan_broadcast(kind, av.shape(), bv.shape());
  Tensor out(plan.out);
  for (std::size_t o = 0; o < out.numel(); ++o) out[o] = f(av[plan.ia[o]], bv[plan.ib[o]]);
  const std::size_t ida = a.id(), idb = b.id();
  return t.record(kind, {ida, idb}, std::move(out),
                  [ida, idb, plan = std::move(plan), da, db](Tape& tp, std::size_t self) {
                    const auto& g = tp.output_grad(self);
                    const Tensor& x = tp.value(ida);
                    const Tensor& y = tp.value(idb);
                    if (tp.requires_grad(ida)) {
                      auto& ga = tp.grad_buffer(ida);
                      for (std::size_t o = 0; o < g.size(); ++o) {
                        ga[plan.ia[o]] += g[o] * da(x[plan.ia[o]], y[plan.ib[o]]);
                      }
                    }
                    if (tp.requires_grad(idb)) {
                      auto& gb = tp.grad_buffer(idb);
                      for (std::size_t o = 0; o < g.size(); ++o) {
                        gb[plan.ib[o]] += g[o] * db(x[plan.ia[o]], y[plan.ib[o]]);
                      }
                    }
                  });
}

// Unary elementwise op where the derivative is expressed from input and output.
template <typename Forward, typename Deriv>
Var unary(Primitive kind, Var x, Forward f, Deriv df) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t id = x.id();
  return t.record(kind, {id}, std::move(out), [id, df](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    const Tensor& in = tp.value(id);
    const Tensor& y = tp.value(self);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(in[i], y[i]);
  });
}

double softplus_value(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      Primitive::add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      Primitive::sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      Primitive::mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  for (double v : b.value().data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      Primitive::div, a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    dim_error(Primitive::matmul, "incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kn::matmul(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ida = a.id(), idb = b.id();
  return t.record(Primitive::matmul, {ida, idb}, std::move(out), [ida, idb, m, k, n](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    if (tp.requires_grad(ida)) {
      std::vector<double> ga(m * k);
      kn::matmul_nt(g, tp.value(idb).data(), ga, m, n, k);
      accumulate(tp, ida, ga);
    }
    if (tp.requires_grad(idb)) {
      std::vector<double> gb(k * n);
      kn::matmul_tn(tp.value(ida).data(), g, gb, k, m, n);
      accumulate(tp, idb, gb);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() != 2) dim_error(Primitive::transpose, "needs rank 2, got " + shape_str(av.shape()));
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  const std::size_t id = a.id();
  return t.record(Primitive::transpose, {id}, std::move(out), [id, r, c](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    }
  });
}

Var conv2d(Var x, Var w, Var b, Padding padding) {
  Tape& t = tape_of(x, w);
  if (b.valid() && b.tape() != &t) throw ContractError("conv2d: bias belongs to a different tape");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1)) {
    dim_error(Primitive::conv2d, "input " + shape_str(xv.shape()) + " incompatible with kernel " + shape_str(wv.shape()));
  }
  kernels::ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), 0};
  if (padding == Padding::same) {
    if (g.kernel_h != g.kernel_w || g.kernel_h % 2 == 0) {
      dim_error(Primitive::conv2d, "same padding needs a square odd kernel, got " + shape_str(wv.shape()));
    }
    g.pad = (g.kernel_h - 1) / 2;
  }
  if (g.height + 2 * g.pad < g.kernel_h || g.width + 2 * g.pad < g.kernel_w) {
    dim_error(Primitive::conv2d, "kernel " + shape_str(wv.shape()) + " larger than input " + shape_str(xv.shape()));
  }
  std::span<const double> bias;
  if (b.valid()) {
    if (b.value().numel() != g.out_channels) {
      dim_error(Primitive::conv2d, "bias " + shape_str(b.value().shape()) + " does not match " +
                                       std::to_string(g.out_channels) + " output channels");
    }
    bias = b.value().data();
  }
  Tensor out({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kn::conv2d_forward(g, xv.data(), wv.data(), bias, out.data());
  std::vector<std::size_t> inputs{x.id(), w.id()};
  if (b.valid()) inputs.push_back(b.id());
  const std::size_t idx = x.id(), idw = w.id();
  const std::size_t idb = b.valid() ? b.id() : static_cast<std::size_t>(-1);
  return t.record(Primitive::conv2d, std::move(inputs), std::move(out), [g, idx, idw, idb](Tape& tp, std::size_t self) {
    const auto& go = tp.output_grad(self);
    if (tp.requires_grad(idx)) {
      std::vector<double> gi(tp.value(idx).numel());
      kn::conv2d_backward_input(g, go, tp.value(idw).data(), gi);
      accumulate(tp, idx, gi);
    }
    const bool want_w = tp.requires_grad(idw);
    const bool want_b = idb != static_cast<std::size_t>(-1) && tp.requires_grad(idb);
    if (want_w || want_b) {
      std::vector<double> gw(tp.value(idw).numel());
      std::vector<double> gb(want_b ? g.out_channels : 0);
      kn::conv2d_backward_weight(g, go, tp.value(idx).data(), gw, gb);
      if (want_w) accumulate(tp, idw, gw);
      if (want_b) accumulate(tp, idb, gb);
    }
  });
}

namespace {

kernels::PoolGeometry pool_geometry(Primitive kind, const Tensor& xv, std::size_t kernel, std::size_t stride) {
  if (xv.rank() != 4) dim_error(kind, "needs [N,C,H,W], got " + shape_str(xv.shape()));
  if (kernel == 0) dim_error(kind, "kernel must be positive");
  kernels::PoolGeometry g{xv.dim(0) * xv.dim(1), xv.dim(2), xv.dim(3), kernel, stride == 0 ? kernel : stride};
  if (g.height < kernel || g.width < kernel) {
    dim_error(kind, "window " + std::to_string(kernel) + " larger than input " + shape_str(xv.shape()));
  }
  return g;
}

}  // namespace

Var maxpool2d(Var x, std::size_t kernel, std::size_t stride) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const auto g = pool_geometry(Primitive::maxpool2d, xv, kernel, stride);
  Tensor out({xv.dim(0), xv.dim(1), g.out_height(), g.out_width()});
  std::vector<std::size_t> argmax(out.numel());
  kn::maxpool2d_forward(g, xv.data(), out.data(), argmax);
  const std::size_t id = x.id();
  return t.record(Primitive::maxpool2d, {id}, std::move(out), [id, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
    const auto& go = tp.output_grad(self);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
  });
}

Var avgpool2d(Var x, std::size_t kernel, std::size_t stride) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const auto g = pool_geometry(Primitive::avgpool2d, xv, kernel, stride);
  Tensor out({xv.dim(0), xv.dim(1), g.out_height(), g.out_width()});
  kn::avgpool2d_forward(g, xv.data(), out.data());
  const std::size_t id = x.id();
  return t.record(Primitive::avgpool2d, {id}, std::move(out), [id, g](Tape& tp, std::size_t self) {
    std::vector<double> gi(tp.value(id).numel());
    kn::avgpool2d_backward(g, tp.output_grad(self), gi);
    accumulate(tp, id, gi);
  });
}

Var relu(Var x) {
  return unary(
      Primitive::relu, x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var softmax(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 2) dim_error(Primitive::softmax, "needs rank 2, got " + shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data().data() + i * cols;
    double* o = out.data().data() + i * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= total;
  }
  const std::size_t id = x.id();
  return t.record(Primitive::softmax, {id}, std::move(out), [id, rows, cols](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    const Tensor& y = tp.value(self);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
    }
  });
}

Var softplus(Var x) {
  return unary(Primitive::softplus, x, softplus_value, [](double v, double) { return sigmoid(v); });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v) + "; clamp the argument first");
  }
  return unary(
      Primitive::log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var exp(Var x) {
  return unary(
      Primitive::exp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var sqrt(Var x) {
  for (double v : x.value().data()) {
    if (v < 0.0) throw DomainError("sqrt: negative input " + std::to_string(v));
  }
  // Subgradient 0 at the origin.
  return unary(
      Primitive::sqrt, x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::size_t id = x.id();
  return t.record(Primitive::sum, {id}, Tensor::scalar(total), [id](Tape& tp, std::size_t self) {
    const double g = tp.output_grad(self)[0];
    auto& gx = tp.grad_buffer(id);
    for (auto& v : gx) v += g;
  });
}

Var mean(Var x) {
  Tape& t = tape_of(x);
  const std::size_t n = x.value().numel();
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::size_t id = x.id();
  return t.record(Primitive::mean, {id}, Tensor::scalar(total / static_cast<double>(n)), [id, n](Tape& tp, std::size_t self) {
    const double g = tp.output_grad(self)[0] / static_cast<double>(n);
    auto& gx = tp.grad_buffer(id);
    for (auto& v : gx) v += g;
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape& t = tape_of(parts[0]);
  const Shape& first = parts[0].value().shape();
  if (axis >= first.size()) dim_error(Primitive::concat, "axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("concat: operands belong to different tapes");
    const Shape& s = p.value().shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) dim_error(Primitive::concat, "shape " + shape_str(s) + " does not align with " + shape_str(first));
    out_shape[axis] += s[axis];
    ids.push_back(p.id());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  for (const Var& p : parts) widths.push_back(p.value().dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * widths[k], widths[k], out.data().begin() + o * row + offset);
    }
    offset += widths[k];
  }
  return t.record(Primitive::concat, ids, std::move(out), [ids, widths, outer, row](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        auto& gx = tp.grad_buffer(ids[k]);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < widths[k]; ++i) gx[o * widths[k] + i] += g[o * row + off + i];
        }
      }
      off += widths[k];
    }
  });
}

Var l2norm(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 2) dim_error(Primitive::l2norm, "needs rank 2, got " + shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out({rows, 1});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += xv[i * cols + j] * xv[i * cols + j];
    out[i] = std::sqrt(acc);
  }
  const std::size_t id = x.id();
  return t.record(Primitive::l2norm, {id}, std::move(out), [id, rows, cols](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& in = tp.value(id);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t i = 0; i < rows; ++i) {
      if (y[i] == 0.0) continue;
      const double f = g[i] / y[i];
      for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += f * in[i * cols + j];
    }
  });
}

Var scale(Var x, double factor) {
  return unary(
      Primitive::scale, x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  return unary(
      Primitive::clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  if (shape_numel(shape) != x.value().numel()) {
    dim_error(Primitive::reshape, "cannot reshape " + shape_str(x.value().shape()) + " to " + shape_str(shape));
  }
  const std::size_t id = x.id();
  return t.record(Primitive::reshape, {id}, x.value().reshaped(std::move(shape)), [id](Tape& tp, std::size_t self) {
    accumulate(tp, id, tp.output_grad(self));
  });
}

Var select_rows(Var x, std::vector<std::size_t> rows) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || rows.empty()) dim_error(Primitive::select_rows, "needs a non-empty row list");
  for (auto r : rows) {
    if (r >= xv.dim(0)) dim_error(Primitive::select_rows, "row " + std::to_string(r) + " out of range for " + shape_str(xv.shape()));
  }
  Tensor out = xv.gather_rows(rows);
  const std::size_t id = x.id(), width = xv.row_size();
  return t.record(Primitive::select_rows, {id}, std::move(out), [id, width, rows = std::move(rows)](Tape& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    auto& gx = tp.grad_buffer(id);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < width; ++j) gx[rows[i] * width + j] += g[i * width + j];
    }
  });
}

Var channel_affine(Var x, Var gamma, Var beta) {
  Tape& t = tape_of(x, gamma);
  if (beta.tape() != &t) throw ContractError("channel_affine: operands belong to different tapes");
  const Tensor& xv = x.value();
  if (xv.rank() < 2) dim_error(Primitive::channel_affine, "needs rank >= 2, got " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.numel() / (n * c);
  if (gamma.value().numel() != c || beta.value().numel() != c) {
    dim_error(Primitive::channel_affine, "scale/shift must have " + std::to_string(c) + " entries");
  }
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  Tensor out(xv.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[base + i] = gv[ch] * xv[base + i] + bv[ch];
    }
  }
  const std::size_t idx = x.id(), idg = gamma.id(), idb = beta.id();
  return t.record(Primitive::channel_affine, {idx, idg, idb}, std::move(out),
                  [idx, idg, idb, n, c, inner](Tape& tp, std::size_t self) {
                    const auto& g = tp.output_grad(self);
                    const Tensor& in = tp.value(idx);
                    const Tensor& gm = tp.value(idg);
                    std::vector<double> dg(c, 0.0), db(c, 0.0);
                    const bool want_x = tp.requires_grad(idx);
                    std::vector<double>* gx = want_x ? &tp.grad_buffer(idx) : nullptr;
                    for (std::size_t s = 0; s < n; ++s) {
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (s * c + ch) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                          dg[ch] += g[base + i] * in[base + i];
                          db[ch] += g[base + i];
                          if (gx) (*gx)[base + i] += g[base + i] * gm[ch];
                        }
                      }
                    }
                    accumulate(tp, idg, dg);
                    accumulate(tp, idb, db);
                  });
}

Var linear(Var x, Var w, Var b) {
  const Shape wshape = w.value().shape();
  if (wshape.size() != 2) dim_error(Primitive::matmul, "linear weight must be rank 2, got " + shape_str(wshape));
  const std::size_t n = x.value().dim(0);
  const std::size_t in = x.value().numel() / n;
  if (in != wshape[1]) {
    dim_error(Primitive::matmul, "linear expects " + std::to_string(wshape[1]) + " inputs per sample, got " +
                                     shape_str(x.value().shape()));
  }
  Var flat = x.value().rank() == 2 ? x : reshape(x, {n, in});
  Var y = matmul(flat, transpose(w));
  if (!b.valid()) return y;
  return add(y, reshape(b, {1, wshape[0]}));
}

Var apply_primitive(Primitive kind, std::span<const Var> in, const Attrs& attrs) {
  auto need = [&](std::size_t count) {
    if (in.size() != count) {
      throw ContractError(std::string(primitive_name(kind)) + " expects " + std::to_string(count) + " operand(s), got " +
                          std::to_string(in.size()));
    }
  };
  switch (kind) {
    case Primitive::add: need(2); return add(in[0], in[1]);
    case Primitive::sub: need(2); return sub(in[0], in[1]);
    case Primitive::mul: need(2); return mul(in[0], in[1]);
    case Primitive::div: need(2); return div(in[0], in[1]);
    case Primitive::matmul: need(2); return matmul(in[0], in[1]);
    case Primitive::transpose: need(1); return transpose(in[0]);
    case Primitive::conv2d:
      if (in.size() == 2) return conv2d(in[0], in[1], Var{}, attrs.padding);
      need(3);
      return conv2d(in[0], in[1], in[2], attrs.padding);
    case Primitive::maxpool2d: need(1); return maxpool2d(in[0], attrs.kernel, attrs.stride);
    case Primitive::avgpool2d: need(1); return avgpool2d(in[0], attrs.kernel, attrs.stride);
    case Primitive::relu: need(1); return relu(in[0]);
    case Primitive::softmax: need(1); return softmax(in[0]);
    case Primitive::softplus: need(1); return softplus(in[0]);
    case Primitive::log: need(1); return log(in[0]);
    case Primitive::exp: need(1); return exp(in[0]);
    case Primitive::sqrt: need(1); return sqrt(in[0]);
    case Primitive::sum: need(1); return sum(in[0]);
    case Primitive::mean: need(1); return mean(in[0]);
    case Primitive::concat: return concat(in, attrs.axis);
    case Primitive::l2norm: need(1); return l2norm(in[0]);
    case Primitive::scale: need(1); return scale(in[0], attrs.factor);
    case Primitive::clamp: need(1); return clamp(in[0], attrs.lo, attrs.hi);
    case Primitive::reshape: need(1); return reshape(in[0], attrs.shape);
    case Primitive::select_rows: need(1); return select_rows(in[0], attrs.rows);
    case Primitive::channel_affine: need(3); return channel_affine(in[0], in[1], in[2]);
    case Primitive::leaf: break;
  }
  throw ContractError("apply_primitive: leaf is not an operation");
}

}  // namespace dccm::ops
