#include "har/tape.hpp"

#include <string>

namespace har {

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Tensor& value, Tensor* grad_sink) {
  if (grad_sink && grad_sink->shape() != value.shape()) {
    throw DimensionError("gradient sink " + to_string(grad_sink->shape()) + " does not match parameter " +
                         to_string(value.shape()));
  }
  Node node;
  node.external = &value;
  node.sink = grad_sink;
  node.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, bool needs_grad, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError("operation at tape position " + std::to_string(nodes_.size()) + " produced a non-finite value");
  }
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  const Node& node = nodes_.at(v.id);
  return node.external ? *node.external : node.value;
}

bool Tape::needs_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs) {
    if (v.valid() && nodes_.at(v.id).needs_grad) return true;
  }
  return false;
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.sink) return *node.sink;
  if (!node.grad.empty()) return node.grad;
  return Tensor(value(v).shape());
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_.at(v.id);
  if (node.sink) return *node.sink;
  if (node.grad.empty()) node.grad = Tensor(value(v).shape());
  return node.grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw DimensionError("backward requires a scalar root, got " + to_string(value(root).shape()));
  }
  if (!nodes_.at(root.id).needs_grad) return;
  grad_buffer(root)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.value, node.grad);
  }
}

}  // namespace har
