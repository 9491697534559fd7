#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lino/tensor.hpp"

namespace lino {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Accumulated gradient; zero-filled when nothing flowed into this node.
  Tensor grad() const;
  bool requires_grad() const;
};

/// Records primitive applications in topological order and runs reverse-mode
/// accumulation. A tape is confined to the thread that builds it.
class Tape {
 public:
  /// Propagates the node's output gradient into its inputs via Tape::grad_buffer.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op output. Inputs must already be on this tape. Non-finite
  /// values raise NumericalError naming `op`.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and walks nodes in reverse. The loss must hold a
  /// single element.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient slot of a node, zero-allocated on first use. Returns nullptr for
  /// nodes that do not require a gradient.
  Tensor* grad_buffer(std::size_t id);
  const Tensor* grad_if_any(std::size_t id) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Drops all gradients so backward can run again.
  void zero_grad();

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
  };

  std::vector<Node> nodes_;
};

}  // namespace lino
