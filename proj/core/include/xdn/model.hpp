#pragma once

// Small layer-graph network description and the U-Net builder.
//
// A Model is a list of layers in topological order; each layer names the
// indices of the layers it consumes. The same description drives the
// differentiable forward pass, graph-free inference, and the guided backward
// passes in xdn/guided.hpp.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xdn/autodiff.hpp"
#include "xdn/tensor.hpp"

namespace xdn::nn {

enum class LayerKind { Input, Conv, Relu, Sigmoid, MaxPool, Upsample, Concat };

const char* layer_kind_name(LayerKind kind);

struct Layer {
  LayerKind kind = LayerKind::Input;
  std::vector<std::size_t> inputs;
  // Conv only: parameter indices.
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
  std::size_t padding = 0;
};

struct Parameter {
  std::string name;
  ad::Var var;
};

enum class OutputActivation { Sigmoid, Linear };

struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t base_width = 8;
  std::size_t depth = 4;
  OutputActivation output_activation = OutputActivation::Sigmoid;

  void validate() const;
  /// Channel width at encoder level i (0 = stem, depth = bottleneck).
  std::size_t encoder_width(std::size_t level) const;
  std::size_t spatial_multiple() const { return std::size_t{1} << depth; }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

class Model {
 public:
  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  std::size_t add_input();
  std::size_t add_conv(std::size_t in, Tensor weight, std::optional<Tensor> bias, std::size_t padding,
                       const std::string& name);
  std::size_t add_relu(std::size_t in);
  std::size_t add_sigmoid(std::size_t in);
  std::size_t add_maxpool(std::size_t in);
  std::size_t add_upsample(std::size_t in);
  std::size_t add_concat(std::size_t a, std::size_t b);
  void set_output(std::size_t layer);

  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t output() const { return output_; }
  const std::optional<UNetConfig>& config() const { return config_; }
  void set_config(UNetConfig c) { config_ = c; }

  /// Per-layer values of one differentiable forward pass.
  struct Trace {
    std::vector<ad::Var> values;
    std::vector<std::vector<std::uint32_t>> argmax;  // non-empty for MaxPool layers
    const ad::Var& output(const Model& m) const { return values[m.output()]; }
  };

  void check_input(const Shape& shape) const;
  Trace trace(const ad::Var& input) const;
  ad::Var forward(const ad::Var& input) const { return trace(input).output(*this); }
  ad::Var forward(const Tensor& input) const { return forward(ad::constant(input)); }

  /// Forward pass without building a graph.
  Tensor infer(const Tensor& input) const;

  std::size_t parameter_count() const;
  std::uint64_t checksum() const;
  void zero_grad();

  Model clone() const;
  /// Deep copy whose parameters never receive gradient.
  Model frozen() const;

 private:
  Model copy(bool requires_grad) const;

  std::vector<Layer> layers_;
  std::vector<Parameter> params_;
  std::size_t output_ = 0;
  std::optional<UNetConfig> config_;
};

/// He-normal kernels, zero biases. Parameters are rounded to single precision
/// so checkpoints (stored as float32) round-trip exactly.
Model unet_build(const UNetConfig& config, std::uint64_t seed);

/// Shapes of every U-Net parameter in build order.
std::vector<std::pair<std::string, Shape>> unet_parameter_shapes(const UNetConfig& config);

/// Rounds every parameter value to the nearest float.
void round_parameters_to_float(Model& model);

}  // namespace xdn::nn
