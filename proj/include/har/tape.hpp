#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "har/tensor.hpp"

namespace har {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

/// Reverse-mode gradient tape.
///
/// Values are appended in execution order. `backward` walks the nodes from the
/// root down to index 0, so every op sees its full output gradient before it
/// distributes gradient to its inputs. Parameters are registered by reference:
/// the tape does not copy them, and their gradients accumulate directly into a
/// caller-owned sink tensor.
class Tape {
 public:
  /// Called with the node's output value and gradient; must accumulate into
  /// the inputs through `grad_buffer`.
  using Backward = std::function<void(Tape&, const Tensor& out, const Tensor& out_grad)>;

  Var constant(Tensor value);
  /// `value` must outlive the tape. A null sink records the parameter as a
  /// constant.
  Var parameter(const Tensor& value, Tensor* grad_sink);
  /// Appends an op result. `backward` is dropped when `needs_grad` is false.
  /// Throws NumericError if the value holds NaN or infinity.
  Var record(Tensor value, bool needs_grad, Backward backward);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  bool needs_grad(std::initializer_list<Var> vs) const;

  /// Accumulated gradient after backward; zeros if nothing reached `v`.
  Tensor grad(Var v) const;
  /// Gradient accumulator for `v`, allocated on first use.
  Tensor& grad_buffer(Var v);

  /// Seeds d(root)/d(root) = 1 and replays the tape in reverse.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Tensor* sink = nullptr;
    bool needs_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
};

}  // namespace har
