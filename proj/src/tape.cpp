#include "dccm/tape.hpp"

#include "dccm/errors.hpp"

namespace dccm {

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::leaf: return "leaf";
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::div: return "div";
    case Primitive::matmul: return "matmul";
    case Primitive::transpose: return "transpose";
    case Primitive::conv2d: return "conv2d";
    case Primitive::maxpool2d: return "maxpool2d";
    case Primitive::avgpool2d: return "avgpool2d";
    case Primitive::relu: return "relu";
    case Primitive::softmax: return "softmax";
    case Primitive::softplus: return "softplus";
    case Primitive::log: return "log";
    case Primitive::exp: return "exp";
    case Primitive::sqrt: return "sqrt";
    case Primitive::sum: return "sum";
    case Primitive::mean: return "mean";
    case Primitive::concat: return "concat";
    case Primitive::l2norm: return "l2norm";
    case Primitive::scale: return "scale";
    case Primitive::clamp: return "clamp";
    case Primitive::reshape: return "reshape";
    case Primitive::select_rows: return "select_rows";
    case Primitive::channel_affine: return "channel_affine";
  }
  return "unknown";
}

void Tape::ensure_open() const {
  if (consumed_) throw StaleGraphError("tape already consumed by backward(); build a fresh forward pass");
}

Var Tape::constant(Tensor value) {
  ensure_open();
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  ensure_open();
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param, bool trainable) {
  ensure_open();
  Node n;
  n.value = Tensor(param.shape(), param.storage());
  if (trainable) {
    n.param = &param;
    n.requires_grad = true;
    param.enable_grad();
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Primitive kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  ensure_open();
  Node n;
  n.kind = kind;
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw ContractError("record: input node out of range");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_.at(id);
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad(Var v) const { return nodes_.at(v.id()).grad; }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  ensure_open();
  const Node& root = nodes_.at(loss.id());
  if (root.value.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto g = n.param->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    // Intermediate gradients are not needed once propagated; leaves keep theirs.
    if (n.kind != Primitive::leaf) std::vector<double>().swap(n.grad);
  }
}

}  // namespace dccm
