#include "lino/autograd.hpp"

#include <string>

#include "lino/errors.hpp"

namespace lino {

const Tensor& Var::value() const { return tape->value(id); }

Tensor Var::grad() const {
  if (const Tensor* g = tape->grad_if_any(id)) return *g;
  return Tensor::zeros(value().shape());
}

bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericalError("leaf tensor contains non-finite values");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericalError(std::string("non-finite output from op '") + op + "'");
  bool needs = false;
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw Error(std::string("op '") + op + "' references a node not on this tape");
    needs = needs || nodes_[in].requires_grad;
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

const Tensor* Tape::grad_if_any(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  if (nodes_[loss.id].value.numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  Tensor* seed = grad_buffer(loss.id);
  if (!seed) return;
  (*seed)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

}  // namespace lino
