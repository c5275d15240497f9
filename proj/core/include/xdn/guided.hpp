#pragma once

// Guided backpropagation saliency and its differentiable reconstruction.
//
// `guided_backward` is the procedural pass: one forward sweep, then a reverse
// sweep where each ReLU keeps R only where both its forward input and the
// incoming signal are positive. It returns the input-space map together with
// the gates it applied.
//
// `saliency_graph` rebuilds the same reverse sweep out of ordinary autodiff
// ops (flipped-kernel convolutions, constant gate multiplies, sigmoid
// derivative factors recomputed from the input), so that `ad::backward`
// through it yields d(saliency)/d(input). Gates enter as constants.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xdn/autodiff.hpp"
#include "xdn/image.hpp"
#include "xdn/model.hpp"

namespace xdn::xai {

struct SaliencyMap {
  Tensor values;  // (B, C_in, H, W), raw and signed
  std::string source;
};

/// Masks captured during one guided pass, indexed by layer.
struct GateRecord {
  Shape input_shape;
  std::vector<Shape> layer_shapes;
  std::vector<Tensor> forward_positive;  // ReLU layers: 1[x > 0]
  std::vector<Tensor> signal_positive;   // ReLU layers: 1[R > 0] (all ones when signal gating is off)
  std::vector<std::vector<std::uint32_t>> argmax;  // MaxPool layers
  // Filled only with GuidedOptions::keep_signals: R arriving at and leaving each ReLU.
  std::vector<Tensor> incoming;
  std::vector<Tensor> outgoing;

  /// The mask actually applied at ReLU layer `layer`.
  Tensor relu_gate(std::size_t layer) const;
};

struct GuidedOptions {
  /// Gate on the sign of the incoming signal as well as the forward input.
  bool gate_on_signal = true;
  bool keep_signals = false;
  std::string source;
};

struct GuidedResult {
  SaliencyMap saliency;
  GateRecord gates;
};

/// `seed` defaults to all ones at the output (gradient of the output sum).
GuidedResult guided_backward(const nn::Model& model, const Tensor& input, const Tensor* seed = nullptr,
                             const GuidedOptions& options = {});

/// Plain d(seed . f)/d(input) through autodiff, for comparison with the guided pass.
Tensor input_gradient(const nn::Model& model, const Tensor& input, const Tensor* seed = nullptr);

/// Differentiable guided backward. `model` should be frozen; its parameters enter as constants.
ad::Var saliency_graph(const nn::Model& model, const ad::Var& input, const GateRecord& gates,
                       const Tensor* seed = nullptr);

/// Mean over pixels of (F_denoised - F_clean)^2; no gradient flows into F_clean.
ad::Var feature_preserving_loss(const ad::Var& f_denoised, const Tensor& f_clean);

/// Min-max normalisation to [0, 1]; a constant map becomes all 0.5.
Image saliency_visualize(const SaliencyMap& map, std::size_t batch_index = 0);

/// w * sigmoid'(w x + b) at x and at x + eps.
std::pair<double, double> sensitivity_demo(double w, double b, double x, double eps);

}  // namespace xdn::xai
