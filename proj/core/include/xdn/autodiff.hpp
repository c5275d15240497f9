#pragma once

// Reverse-mode automatic differentiation over rank-4 tensors.
//
// A graph is built eagerly: every op computes its value immediately and
// returns a node that remembers its parents and a closure that pushes the
// node's gradient into them. `backward` runs those closures in reverse
// topological order. Gradients of leaves must be cleared with `zero_grad`
// between passes; accumulating twice into a dirty leaf is rejected.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "xdn/tensor.hpp"

namespace xdn::ad {

enum class Op {
  Leaf,
  Conv2d,
  MaxPool2d,
  Unpool2d,
  Upsample2x,
  Upsample2xAdjoint,
  ConcatChannels,
  SliceChannels,
  Relu,
  Sigmoid,
  Mul,
  Add,
  Sub,
  ScaleAdd,
  MseMean,
  SumAll,
};

const char* op_name(Op op);

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  const Tensor& value() const { return value_; }
  const Tensor& grad() const { return grad_; }
  const Shape& shape() const { return value_.shape(); }
  Op op() const { return op_; }
  const std::vector<Var>& parents() const { return parents_; }
  bool requires_grad() const { return requires_grad_; }

  void zero_grad();

  /// Leaves only: in-place parameter updates between optimisation steps.
  Tensor& mutable_value();

 private:
  friend Var make_node(Tensor, Op, std::vector<Var>, std::function<void(Node&)>);
  friend Var leaf(Tensor, bool);
  friend void backward(const Var&);

  Node(Tensor value, Op op, std::vector<Var> parents, bool requires_grad);

  Tensor& grad_for_accumulate();

  Tensor value_;
  Tensor grad_;
  Op op_;
  std::vector<Var> parents_;
  bool requires_grad_;
  bool grad_dirty_ = false;
  bool backward_done_ = false;
  std::function<void(Node&)> backward_fn_;

 public:
  /// Used by op closures to accumulate into a parent's gradient.
  static void accumulate(const Var& parent, const Tensor& delta);
  static Tensor& grad_ref(const Var& parent) { return parent->grad_for_accumulate(); }
};

/// A graph input. Parameters use requires_grad = true; frozen tensors use false.
Var leaf(Tensor value, bool requires_grad = false);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }

/// Builds an interior node; the node requires grad if any parent does.
Var make_node(Tensor value, Op op, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Reverse sweep from a scalar loss. Rejects a second call on the same loss
/// and any leaf that still carries gradient from an earlier pass.
void backward(const Var& loss);

// Primitive ops ---------------------------------------------------------------

/// Cross-correlation, stride 1. `bias` may be null.
Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t padding);

struct Pooled {
  Var output;
  std::vector<std::uint32_t> argmax;
};
Pooled maxpool2d(const Var& input);

/// Linear scatter of `input` onto the recorded argmax positions (adjoint of pooling at fixed indices).
Var unpool2d(const Var& input, const std::vector<std::uint32_t>& argmax, const Shape& output_shape);

Var upsample_bilinear2x(const Var& input);
Var upsample_bilinear2x_adjoint(const Var& input);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& input, std::size_t begin, std::size_t count);

Var relu(const Var& input);
Var sigmoid(const Var& input);

Var mul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// a + lambda * b
Var scale_add(const Var& a, const Var& b, double lambda);

Var mse_mean(const Var& a, const Var& b);
Var sum_all(const Var& input);

/// Central differences of a scalar function, one coordinate at a time.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace xdn::ad
