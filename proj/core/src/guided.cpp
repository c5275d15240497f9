#include "xdn/guided.hpp"

#include <algorithm>
#include <limits>

#include "xdn/kernels.hpp"

namespace xdn::xai {

using nn::LayerKind;

namespace {

void add_into(Tensor& dst, Tensor src) {
  if (dst.empty() && dst.shape().empty()) {
    dst = std::move(src);
  } else {
    dst += src;
  }
}

void add_into(ad::Var& dst, const ad::Var& src) { dst = dst ? ad::add(dst, src) : src; }

std::size_t input_layer(const nn::Model& model) {
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::Input) return i;
  throw std::invalid_argument("model has no input layer");
}

Tensor seed_or_ones(const Tensor* seed, const Shape& output_shape) {
  if (!seed) return Tensor(output_shape, 1.0);
  if (seed->shape() != output_shape) {
    throw ShapeError("seed map shape " + to_string(seed->shape()) + " differs from model output " +
                     to_string(output_shape));
  }
  return *seed;
}

}  // namespace

Tensor GateRecord::relu_gate(std::size_t layer) const {
  Tensor g = forward_positive.at(layer);
  const Tensor& s = signal_positive.at(layer);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s[i];
  return g;
}

GuidedResult guided_backward(const nn::Model& model, const Tensor& input, const Tensor* seed,
                             const GuidedOptions& options) {
  model.check_input(input.shape());
  const auto& layers = model.layers();
  const auto& params = model.parameters();
  const std::size_t n = layers.size();

  GuidedResult result;
  GateRecord& gates = result.gates;
  gates.input_shape = input.shape();
  gates.layer_shapes.resize(n);
  gates.forward_positive.resize(n);
  gates.signal_positive.resize(n);
  gates.argmax.resize(n);
  if (options.keep_signals) {
    gates.incoming.resize(n);
    gates.outgoing.resize(n);
  }

  std::vector<Tensor> act(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::Input: act[i] = input; break;
      case LayerKind::Conv:
        act[i] = kernels::conv2d_forward(act[l.inputs[0]], params[l.weight].var->value(),
                                         l.bias ? &params[*l.bias].var->value() : nullptr, l.padding);
        break;
      case LayerKind::Relu:
        act[i] = act[l.inputs[0]];
        for (double& v : act[i].data()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::Sigmoid:
        act[i] = act[l.inputs[0]];
        for (double& v : act[i].data()) v = kernels::sigmoid(v);
        break;
      case LayerKind::MaxPool: {
        auto p = kernels::maxpool2x2_forward(act[l.inputs[0]]);
        act[i] = std::move(p.output);
        gates.argmax[i] = std::move(p.argmax);
        break;
      }
      case LayerKind::Upsample: act[i] = kernels::upsample2x_forward(act[l.inputs[0]]); break;
      case LayerKind::Concat: act[i] = kernels::concat_channels(act[l.inputs[0]], act[l.inputs[1]]); break;
    }
    gates.layer_shapes[i] = act[i].shape();
  }

  std::vector<Tensor> signal(n);
  signal[model.output()] = seed_or_ones(seed, act[model.output()].shape());

  for (std::size_t idx = n; idx-- > 0;) {
    const auto& l = layers[idx];
    Tensor& r = signal[idx];
    if (l.kind == LayerKind::Relu) {
      // Gates are recorded even for layers that receive no signal.
      const Tensor& x = act[l.inputs[0]];
      Tensor fwd(x.shape()), sig(x.shape(), 1.0);
      for (std::size_t i = 0; i < x.size(); ++i) fwd[i] = x[i] > 0.0 ? 1.0 : 0.0;
      if (r.empty()) r = Tensor(x.shape());
      if (options.gate_on_signal)
        for (std::size_t i = 0; i < r.size(); ++i) sig[i] = r[i] > 0.0 ? 1.0 : 0.0;
      Tensor gated = r;
      for (std::size_t i = 0; i < gated.size(); ++i) gated[i] *= fwd[i] * sig[i];
      gates.forward_positive[idx] = std::move(fwd);
      gates.signal_positive[idx] = std::move(sig);
      if (options.keep_signals) {
        gates.incoming[idx] = r;
        gates.outgoing[idx] = gated;
      }
      add_into(signal[l.inputs[0]], std::move(gated));
      continue;
    }
    if (r.empty() || l.kind == LayerKind::Input) continue;
    switch (l.kind) {
      case LayerKind::Conv:
        add_into(signal[l.inputs[0]], kernels::conv2d_backward_input(r, params[l.weight].var->value(),
                                                                     act[l.inputs[0]].shape(), l.padding));
        break;
      case LayerKind::Sigmoid: {
        Tensor d = r;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= act[idx][i] * (1.0 - act[idx][i]);
        add_into(signal[l.inputs[0]], std::move(d));
        break;
      }
      case LayerKind::MaxPool:
        add_into(signal[l.inputs[0]], kernels::maxpool2x2_scatter(r, gates.argmax[idx], act[l.inputs[0]].shape()));
        break;
      case LayerKind::Upsample: add_into(signal[l.inputs[0]], kernels::upsample2x_adjoint(r)); break;
      case LayerKind::Concat: {
        const std::size_t ca = act[l.inputs[0]].channels();
        add_into(signal[l.inputs[0]], kernels::slice_channels(r, 0, ca));
        add_into(signal[l.inputs[1]], kernels::slice_channels(r, ca, act[l.inputs[1]].channels()));
        break;
      }
      default: break;
    }
    r = Tensor();  // release
  }

  const std::size_t in = input_layer(model);
  result.saliency.values = signal[in].empty() ? Tensor(input.shape()) : std::move(signal[in]);
  result.saliency.source = options.source;
  return result;
}

Tensor input_gradient(const nn::Model& model, const Tensor& input, const Tensor* seed) {
  const nn::Model frozen = model.frozen();
  auto x = ad::leaf(input, true);
  auto out = frozen.forward(x);
  const Tensor s = seed_or_ones(seed, out->shape());
  ad::backward(ad::sum_all(ad::mul(out, ad::constant(s))));
  return x->grad();
}

ad::Var saliency_graph(const nn::Model& model, const ad::Var& input, const GateRecord& gates, const Tensor* seed) {
  const auto& layers = model.layers();
  const auto& params = model.parameters();
  const std::size_t n = layers.size();
  if (gates.input_shape != input->shape() || gates.layer_shapes.size() != n) {
    throw ShapeError("saliency_graph: stale gate record (captured for input " + to_string(gates.input_shape) +
                     ", got " + to_string(input->shape()) + ")");
  }
  const auto trace = model.trace(input);
  for (std::size_t i = 0; i < n; ++i) {
    if (trace.values[i]->shape() != gates.layer_shapes[i]) {
      throw ShapeError("saliency_graph: stale gate record at layer " + std::to_string(i));
    }
    if (layers[i].kind == LayerKind::Relu && gates.forward_positive[i].shape() != trace.values[i]->shape()) {
      throw ShapeError("saliency_graph: ReLU gate shape mismatch at layer " + std::to_string(i));
    }
  }

  std::vector<ad::Var> signal(n);
  signal[model.output()] = ad::constant(seed_or_ones(seed, trace.values[model.output()]->shape()));

  for (std::size_t idx = n; idx-- > 0;) {
    const auto& l = layers[idx];
    const ad::Var r = signal[idx];
    if (!r || l.kind == LayerKind::Input) continue;
    switch (l.kind) {
      case LayerKind::Conv: {
        const Tensor& w = params[l.weight].var->value();
        const std::size_t k = w.dim(2);
        if (l.padding + 1 > k) throw ShapeError("saliency_graph: unsupported conv padding");
        auto kernel = ad::constant(kernels::flip_transpose_kernel(w));
        add_into(signal[l.inputs[0]], ad::conv2d(r, kernel, ad::Var{}, k - 1 - l.padding));
        break;
      }
      case LayerKind::Relu: add_into(signal[l.inputs[0]], ad::mul(r, ad::constant(gates.relu_gate(idx)))); break;
      case LayerKind::Sigmoid: {
        const ad::Var& s = trace.values[idx];
        auto ones = ad::constant(Tensor(s->shape(), 1.0));
        add_into(signal[l.inputs[0]], ad::mul(r, ad::mul(s, ad::sub(ones, s))));
        break;
      }
      case LayerKind::MaxPool:
        add_into(signal[l.inputs[0]], ad::unpool2d(r, gates.argmax[idx], trace.values[l.inputs[0]]->shape()));
        break;
      case LayerKind::Upsample: add_into(signal[l.inputs[0]], ad::upsample_bilinear2x_adjoint(r)); break;
      case LayerKind::Concat: {
        const std::size_t ca = trace.values[l.inputs[0]]->shape()[1];
        const std::size_t cb = trace.values[l.inputs[1]]->shape()[1];
        add_into(signal[l.inputs[0]], ad::slice_channels(r, 0, ca));
        add_into(signal[l.inputs[1]], ad::slice_channels(r, ca, cb));
        break;
      }
      default: break;
    }
  }
  const std::size_t in = input_layer(model);
  return signal[in] ? signal[in] : ad::constant(Tensor(input->shape()));
}

ad::Var feature_preserving_loss(const ad::Var& f_denoised, const Tensor& f_clean) {
  return ad::mse_mean(f_denoised, ad::constant(f_clean));
}

Image saliency_visualize(const SaliencyMap& map, std::size_t batch_index) {
  Image raw = Image::from_tensor(map.values, batch_index);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : raw.pixels()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : raw.pixels()) v = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  return raw;
}

std::pair<double, double> sensitivity_demo(double w, double b, double x, double eps) {
  auto grad = [&](double at) {
    const double s = kernels::sigmoid(w * at + b);
    return w * s * (1.0 - s);
  };
  return {grad(x), grad(x + eps)};
}

}  // namespace xdn::xai
