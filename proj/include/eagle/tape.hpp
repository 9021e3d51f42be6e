#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "eagle/tensor.hpp"

namespace eagle {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
  friend bool operator==(Var, Var) = default;
};

class Tape;

// Receives the gradient of the node's output and accumulates into its inputs.
using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

// Append-only reverse-mode tape. Node inputs always precede the node.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false, std::string name = "leaf");
  Var constant(Tensor value) { return leaf(std::move(value), false, "const"); }

  // Records an operation. `backward` may be empty for non-differentiable ops.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const std::string& op(Var v) const { return nodes_.at(v.id).op; }
  const std::vector<Var>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient after backward(). Nodes not reached carry a zero tensor.
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  // Adds `g` into the gradient of `v` if it participates in differentiation.
  void accumulate(Var v, const Tensor& g);

  void backward(Var loss);
  void zero_grad();

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  Tensor zero_;
};

}  // namespace eagle
