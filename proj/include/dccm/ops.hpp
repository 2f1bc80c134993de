#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dccm/tape.hpp"

// Differentiable primitives. Every function records one node on the tape that
// owns its operands and returns the handle of the result.

namespace dccm::ops {

enum class Padding { valid, same };

// Elementwise with same-rank broadcasting (each extent equal or 1) or a
// single-element operand on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

/// [m x k] * [k x n]
Var matmul(Var a, Var b);
Var transpose(Var a);

/// x [N,C,H,W], w [O,C,k,k], b [O] (optional: pass an invalid Var), stride 1.
Var conv2d(Var x, Var w, Var b, Padding padding);
/// Non-overlapping by default (stride 0 means stride == kernel).
Var maxpool2d(Var x, std::size_t kernel, std::size_t stride = 0);
Var avgpool2d(Var x, std::size_t kernel, std::size_t stride = 0);

Var relu(Var x);
/// Row-wise over the last axis of a rank-2 tensor.
Var softmax(Var x);
Var softplus(Var x);
Var log(Var x);
Var exp(Var x);
Var sqrt(Var x);

/// Reductions over all elements; result has shape [1].
Var sum(Var x);
Var mean(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
/// Euclidean norm of each row of a rank-2 tensor; result [rows, 1].
Var l2norm(Var x);
Var scale(Var x, double factor);
/// Values outside [lo, hi] are pinned and pass zero gradient.
Var clamp(Var x, double lo, double hi);
Var reshape(Var x, Shape shape);
/// Gathers leading-axis slices; backward scatter-adds.
Var select_rows(Var x, std::vector<std::size_t> rows);
/// y[n,c,...] = gamma[c] * x[n,c,...] + beta[c]; x has rank >= 2.
Var channel_affine(Var x, Var gamma, Var beta);

/// y = x w^T + b with w [out, in]; x is flattened to [N, in].
Var linear(Var x, Var w, Var b);

/// Attributes for the generic dispatcher.
struct Attrs {
  Padding padding = Padding::valid;
  std::size_t kernel = 2;
  std::size_t stride = 0;
  std::size_t axis = 0;
  double factor = 1.0;
  double lo = 0.0;
  double hi = 1.0;
  Shape shape;
  std::vector<std::size_t> rows;
};

/// Applies a primitive by kind; operands as documented on the typed functions.
Var apply_primitive(Primitive kind, std::span<const Var> inputs, const Attrs& attrs = {});

}  // namespace dccm::ops
