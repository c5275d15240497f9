#include "xdn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "xdn/kernels.hpp"

namespace xdn::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Conv2d: return "conv2d";
    case Op::MaxPool2d: return "maxpool2d";
    case Op::Unpool2d: return "unpool2d";
    case Op::Upsample2x: return "upsample_bilinear2x";
    case Op::Upsample2xAdjoint: return "upsample_bilinear2x_adjoint";
    case Op::ConcatChannels: return "concat_channels";
    case Op::SliceChannels: return "slice_channels";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Mul: return "mul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::ScaleAdd: return "scale_add";
    case Op::MseMean: return "mse_mean";
    case Op::SumAll: return "sum_all";
  }
  return "unknown";
}

Node::Node(Tensor value, Op op, std::vector<Var> parents, bool requires_grad)
    : value_(std::move(value)), op_(op), parents_(std::move(parents)), requires_grad_(requires_grad) {
  grad_ = Tensor::zeros_like(value_);
}

void Node::zero_grad() {
  grad_.fill(0.0);
  grad_dirty_ = false;
  backward_done_ = false;
}

Tensor& Node::mutable_value() {
  if (op_ != Op::Leaf) throw GraphError("mutable_value: only leaf values may be updated in place");
  return value_;
}

Tensor& Node::grad_for_accumulate() {
  grad_dirty_ = true;
  return grad_;
}

void Node::accumulate(const Var& parent, const Tensor& delta) {
  if (!parent->requires_grad_) return;
  parent->grad_for_accumulate() += delta;
}

Var leaf(Tensor value, bool requires_grad) {
  return Var(new Node(std::move(value), Op::Leaf, {}, requires_grad));
}

Var make_node(Tensor value, Op op, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  const bool rg = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p && p->requires_grad(); });
  Var n(new Node(std::move(value), op, std::move(parents), rg));
  if (rg) n->backward_fn_ = std::move(backward_fn);
  return n;
}

void backward(const Var& loss) {
  if (!loss) throw GraphError("backward: null loss");
  if (loss->value().size() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " + to_string(loss->shape()));
  }
  if (loss->backward_done_) throw GraphError("backward: already run on this loss; zero gradients and rebuild");

  // Iterative post-order DFS; the result is a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p && p->requires_grad_ && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->op_ == Op::Leaf && n->grad_dirty_) {
      throw GraphError("backward: leaf gradient not zeroed since the previous pass");
    }
  }

  loss->backward_done_ = true;
  if (!loss->requires_grad_) return;
  loss->grad_for_accumulate()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn_) n->backward_fn_(*n);
  }
}

// Ops ---------------------------------------------------------------------------

Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t padding) {
  Tensor out = kernels::conv2d_forward(input->value(), kernel->value(), bias ? &bias->value() : nullptr, padding);
  std::vector<Var> parents{input, kernel};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), Op::Conv2d, std::move(parents), [padding](Node& self) {
    const auto& ps = self.parents();
    const Var& x = ps[0];
    const Var& w = ps[1];
    if (x->requires_grad()) {
      Node::accumulate(x, kernels::conv2d_backward_input(self.grad(), w->value(), x->shape(), padding));
    }
    const bool want_b = ps.size() > 2 && ps[2]->requires_grad();
    if (w->requires_grad() || want_b) {
      Tensor gw = Tensor::zeros_like(w->value());
      Tensor gb = want_b ? Tensor::zeros_like(ps[2]->value()) : Tensor();
      kernels::conv2d_backward_params(self.grad(), x->value(), padding, gw, want_b ? &gb : nullptr);
      Node::accumulate(w, gw);
      if (want_b) Node::accumulate(ps[2], gb);
    }
  });
}

Pooled maxpool2d(const Var& input) {
  auto r = kernels::maxpool2x2_forward(input->value());
  auto argmax = r.argmax;
  Var out = make_node(std::move(r.output), Op::MaxPool2d, {input}, [argmax](Node& self) {
    const Var& x = self.parents()[0];
    Tensor& g = Node::grad_ref(x);
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad()[i];
  });
  return Pooled{std::move(out), std::move(r.argmax)};
}

Var unpool2d(const Var& input, const std::vector<std::uint32_t>& argmax, const Shape& output_shape) {
  Tensor out = kernels::maxpool2x2_scatter(input->value(), argmax, output_shape);
  return make_node(std::move(out), Op::Unpool2d, {input}, [argmax](Node& self) {
    const Var& x = self.parents()[0];
    Node::accumulate(x, kernels::maxpool2x2_gather(self.grad(), argmax, x->shape()));
  });
}

Var upsample_bilinear2x(const Var& input) {
  return make_node(kernels::upsample2x_forward(input->value()), Op::Upsample2x, {input}, [](Node& self) {
    Node::accumulate(self.parents()[0], kernels::upsample2x_adjoint(self.grad()));
  });
}

Var upsample_bilinear2x_adjoint(const Var& input) {
  return make_node(kernels::upsample2x_adjoint(input->value()), Op::Upsample2xAdjoint, {input}, [](Node& self) {
    Node::accumulate(self.parents()[0], kernels::upsample2x_forward(self.grad()));
  });
}

Var concat_channels(const Var& a, const Var& b) {
  return make_node(kernels::concat_channels(a->value(), b->value()), Op::ConcatChannels, {a, b}, [](Node& self) {
    const Var& pa = self.parents()[0];
    const Var& pb = self.parents()[1];
    const std::size_t ca = pa->shape()[1];
    if (pa->requires_grad()) Node::accumulate(pa, kernels::slice_channels(self.grad(), 0, ca));
    if (pb->requires_grad()) Node::accumulate(pb, kernels::slice_channels(self.grad(), ca, pb->shape()[1]));
  });
}

Var slice_channels(const Var& input, std::size_t begin, std::size_t count) {
  return make_node(kernels::slice_channels(input->value(), begin, count), Op::SliceChannels, {input},
                   [begin, count](Node& self) {
                     const Var& x = self.parents()[0];
                     Tensor& g = Node::grad_ref(x);
                     const auto& s = x->shape();
                     const std::size_t plane = s[2] * s[3];
                     for (std::size_t n = 0; n < s[0]; ++n) {
                       const double* src = self.grad().data().data() + n * count * plane;
                       double* dst = g.data().data() + (n * s[1] + begin) * plane;
                       for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                     }
                   });
}

Var relu(const Var& input) {
  Tensor out = input->value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), Op::Relu, {input}, [](Node& self) {
    const Var& x = self.parents()[0];
    Tensor& g = Node::grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x->value()[i] > 0.0) g[i] += self.grad()[i];
  });
}

Var sigmoid(const Var& input) {
  Tensor out = input->value();
  for (double& v : out.data()) v = kernels::sigmoid(v);
  return make_node(std::move(out), Op::Sigmoid, {input}, [](Node& self) {
    Tensor& g = Node::grad_ref(self.parents()[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value()[i];
      g[i] += self.grad()[i] * s * (1.0 - s);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->value(), b->value(), "mul");
  Tensor out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value()[i];
  return make_node(std::move(out), Op::Mul, {a, b}, [](Node& self) {
    const Var& pa = self.parents()[0];
    const Var& pb = self.parents()[1];
    if (pa->requires_grad()) {
      Tensor& g = Node::grad_ref(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad()[i] * pb->value()[i];
    }
    if (pb->requires_grad()) {
      Tensor& g = Node::grad_ref(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad()[i] * pa->value()[i];
    }
  });
}

Var add(const Var& a, const Var& b) { return scale_add(a, b, 1.0); }

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value(), b->value(), "sub");
  Tensor out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value()[i];
  return make_node(std::move(out), Op::Sub, {a, b}, [](Node& self) {
    const Var& pa = self.parents()[0];
    const Var& pb = self.parents()[1];
    if (pa->requires_grad()) Node::accumulate(pa, self.grad());
    if (pb->requires_grad()) {
      Tensor& g = Node::grad_ref(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad()[i];
    }
  });
}

Var scale_add(const Var& a, const Var& b, double lambda) {
  require_same_shape(a->value(), b->value(), "scale_add");
  Tensor out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda * b->value()[i];
  const Op op = lambda == 1.0 ? Op::Add : Op::ScaleAdd;
  return make_node(std::move(out), op, {a, b}, [lambda](Node& self) {
    const Var& pa = self.parents()[0];
    const Var& pb = self.parents()[1];
    if (pa->requires_grad()) Node::accumulate(pa, self.grad());
    if (pb->requires_grad()) {
      Tensor& g = Node::grad_ref(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda * self.grad()[i];
    }
  });
}

Var mse_mean(const Var& a, const Var& b) {
  require_same_shape(a->value(), b->value(), "mse_mean");
  const std::size_t n = a->value().size();
  if (n == 0) throw ShapeError("mse_mean: empty operands");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a->value()[i] - b->value()[i];
    s += d * d;
  }
  Tensor out({1}, s / static_cast<double>(n));
  return make_node(std::move(out), Op::MseMean, {a, b}, [n](Node& self) {
    const Var& pa = self.parents()[0];
    const Var& pb = self.parents()[1];
    const double scale = 2.0 * self.grad()[0] / static_cast<double>(n);
    if (pa->requires_grad()) {
      Tensor& g = Node::grad_ref(pa);
      for (std::size_t i = 0; i < n; ++i) g[i] += scale * (pa->value()[i] - pb->value()[i]);
    }
    if (pb->requires_grad()) {
      Tensor& g = Node::grad_ref(pb);
      for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (pa->value()[i] - pb->value()[i]);
    }
  });
}

Var sum_all(const Var& input) {
  double s = 0.0;
  for (double v : input->value().data()) s += v;
  return make_node(Tensor({1}, s), Op::SumAll, {input}, [](Node& self) {
    Tensor& g = Node::grad_ref(self.parents()[0]);
    const double up = self.grad()[0];
    for (double& v : g.data()) v += up;
  });
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace xdn::ad
