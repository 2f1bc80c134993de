#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dccm/tensor.hpp"

namespace dccm {

enum class Primitive {
  leaf,
  add,
  sub,
  mul,
  div,
  matmul,
  transpose,
  conv2d,
  maxpool2d,
  avgpool2d,
  relu,
  softmax,
  softplus,
  log,
  exp,
  sqrt,
  sum,
  mean,
  concat,
  l2norm,
  scale,
  clamp,
  reshape,
  select_rows,
  channel_affine,
};

std::string_view primitive_name(Primitive kind);

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic computation graph. Nodes are appended in evaluation order, so the
/// node vector is already a topological order; backward walks it in reverse.
/// A tape is single-use: after backward() it rejects further recording and a
/// second backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Primitive kind = Primitive::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is readable through grad() after backward.
  Var variable(Tensor value);
  /// Leaf bound to an external parameter; backward accumulates into param.grad().
  /// With trainable == false the parameter is read as a constant.
  Var parameter(Tensor& param, bool trainable = true);

  /// Appends a primitive application. Used by the ops layer.
  Var record(Primitive kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  /// Gradient of a leaf variable after backward (empty if it received none).
  std::span<const double> grad(Var v) const;

  /// Gradient buffer of a node, zero-initialised on first access. Ops use this
  /// from backward functions.
  std::vector<double>& grad_buffer(std::size_t id);
  const std::vector<double>& output_grad(std::size_t id) const { return nodes_.at(id).grad; }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  void ensure_open() const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace dccm
