#include "eagle/tape.hpp"

#include "eagle/error.hpp"

namespace eagle {

Var Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  nodes_.push_back(Node{std::move(name), std::move(value), {}, {}, {}, requires_grad});
  return Var{nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    if (in.id >= nodes_.size())
      fail(ErrorCode::ShapeMismatch, "op " + op + " references a node that does not exist yet");
    needs = needs || nodes_[in.id].requires_grad;
  }
  check_finite(value, "output of " + op);
  nodes_.push_back(Node{std::move(op), std::move(value), {}, std::move(inputs),
                        needs ? std::move(backward) : BackwardFn{}, needs});
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) {
    // Lazily-shaped zero for unreached nodes.
    const_cast<Tape*>(this)->zero_ = Tensor::zeros_like(n.value);
    return zero_;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (!g.same_shape(n.value))
    fail(ErrorCode::ShapeMismatch, "gradient " + shape_str(g.shape()) + " for node " + n.op + " of shape " +
                                       shape_str(n.value.shape()));
  if (n.grad.empty())
    n.grad = g;
  else
    n.grad += g;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor();
}

void Tape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1)
    fail(ErrorCode::NonScalarLoss, "backward from node " + root.op + " of shape " + shape_str(root.value.shape()));
  zero_grad();
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace eagle
