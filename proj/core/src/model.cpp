#include "xdn/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "xdn/kernels.hpp"
#include "xdn/rng.hpp"

namespace xdn::nn {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Concat: return "concat";
  }
  return "unknown";
}

void UNetConfig::validate() const {
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("UNetConfig: channel counts must be positive");
  if (base_width == 0) throw std::invalid_argument("UNetConfig: base width must be positive");
  if (depth == 0 || depth > 8) throw std::invalid_argument("UNetConfig: depth must be in [1, 8]");
}

std::size_t UNetConfig::encoder_width(std::size_t level) const {
  return base_width << std::min(level, depth - 1);
}

std::size_t Model::add_input() {
  layers_.push_back(Layer{LayerKind::Input, {}, 0, std::nullopt, 0});
  return layers_.size() - 1;
}

std::size_t Model::add_conv(std::size_t in, Tensor weight, std::optional<Tensor> bias, std::size_t padding,
                            const std::string& name) {
  if (in >= layers_.size()) throw std::out_of_range("add_conv: unknown input layer");
  require_rank4(weight, "add_conv");
  Layer l{LayerKind::Conv, {in}, params_.size(), std::nullopt, padding};
  params_.push_back(Parameter{name + ".weight", ad::leaf(std::move(weight), true)});
  if (bias) {
    l.bias = params_.size();
    params_.push_back(Parameter{name + ".bias", ad::leaf(std::move(*bias), true)});
  }
  layers_.push_back(std::move(l));
  return layers_.size() - 1;
}

namespace {
std::size_t push_unary(std::vector<Layer>& layers, LayerKind kind, std::size_t in) {
  if (in >= layers.size()) throw std::out_of_range("model: unknown input layer");
  layers.push_back(Layer{kind, {in}, 0, std::nullopt, 0});
  return layers.size() - 1;
}
}  // namespace

std::size_t Model::add_relu(std::size_t in) { return push_unary(layers_, LayerKind::Relu, in); }
std::size_t Model::add_sigmoid(std::size_t in) { return push_unary(layers_, LayerKind::Sigmoid, in); }
std::size_t Model::add_maxpool(std::size_t in) { return push_unary(layers_, LayerKind::MaxPool, in); }
std::size_t Model::add_upsample(std::size_t in) { return push_unary(layers_, LayerKind::Upsample, in); }

std::size_t Model::add_concat(std::size_t a, std::size_t b) {
  if (a >= layers_.size() || b >= layers_.size()) throw std::out_of_range("add_concat: unknown input layer");
  layers_.push_back(Layer{LayerKind::Concat, {a, b}, 0, std::nullopt, 0});
  return layers_.size() - 1;
}

void Model::set_output(std::size_t layer) {
  if (layer >= layers_.size()) throw std::out_of_range("set_output: unknown layer");
  output_ = layer;
}

void Model::check_input(const Shape& shape) const {
  if (shape.size() != 4) throw ShapeError("model input must be (B, C, H, W), got " + to_string(shape));
  if (!config_) return;
  if (shape[1] != config_->in_channels) {
    throw ShapeError("model expects " + std::to_string(config_->in_channels) + " input channels, got " +
                     to_string(shape));
  }
  const std::size_t m = config_->spatial_multiple();
  if (shape[2] % m != 0 || shape[3] % m != 0 || shape[2] == 0 || shape[3] == 0) {
    throw ShapeError("U-Net input height and width must be positive multiples of " + std::to_string(m) + ", got " +
                     to_string(shape));
  }
}

Model::Trace Model::trace(const ad::Var& input) const {
  check_input(input->shape());
  Trace t;
  t.values.resize(layers_.size());
  t.argmax.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    switch (l.kind) {
      case LayerKind::Input: t.values[i] = input; break;
      case LayerKind::Conv:
        t.values[i] = ad::conv2d(t.values[l.inputs[0]], params_[l.weight].var,
                                 l.bias ? params_[*l.bias].var : ad::Var{}, l.padding);
        break;
      case LayerKind::Relu: t.values[i] = ad::relu(t.values[l.inputs[0]]); break;
      case LayerKind::Sigmoid: t.values[i] = ad::sigmoid(t.values[l.inputs[0]]); break;
      case LayerKind::MaxPool: {
        auto p = ad::maxpool2d(t.values[l.inputs[0]]);
        t.values[i] = std::move(p.output);
        t.argmax[i] = std::move(p.argmax);
        break;
      }
      case LayerKind::Upsample: t.values[i] = ad::upsample_bilinear2x(t.values[l.inputs[0]]); break;
      case LayerKind::Concat:
        t.values[i] = ad::concat_channels(t.values[l.inputs[0]], t.values[l.inputs[1]]);
        break;
    }
  }
  return t;
}

Tensor Model::infer(const Tensor& input) const {
  check_input(input.shape());
  std::vector<Tensor> v(layers_.size());
  // Release activations once their last consumer has run.
  std::vector<std::size_t> last_use(layers_.size(), 0);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto in : layers_[i].inputs) last_use[in] = i;
  last_use[output_] = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    switch (l.kind) {
      case LayerKind::Input: v[i] = input; break;
      case LayerKind::Conv:
        v[i] = kernels::conv2d_forward(v[l.inputs[0]], params_[l.weight].var->value(),
                                       l.bias ? &params_[*l.bias].var->value() : nullptr, l.padding);
        break;
      case LayerKind::Relu:
        v[i] = v[l.inputs[0]];
        for (double& x : v[i].data()) x = x > 0.0 ? x : 0.0;
        break;
      case LayerKind::Sigmoid:
        v[i] = v[l.inputs[0]];
        for (double& x : v[i].data()) x = kernels::sigmoid(x);
        break;
      case LayerKind::MaxPool: v[i] = kernels::maxpool2x2_forward(v[l.inputs[0]]).output; break;
      case LayerKind::Upsample: v[i] = kernels::upsample2x_forward(v[l.inputs[0]]); break;
      case LayerKind::Concat: v[i] = kernels::concat_channels(v[l.inputs[0]], v[l.inputs[1]]); break;
    }
    for (auto in : l.inputs)
      if (last_use[in] == i) v[in] = Tensor();
  }
  return std::move(v[output_]);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value().size();
  return n;
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a(std::as_bytes(std::span(p.name)), h);
    h = fnv1a(std::as_bytes(p.var->value().data()), h);
  }
  return h;
}

void Model::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

Model Model::copy(bool requires_grad) const {
  Model m;
  m.layers_ = layers_;
  m.output_ = output_;
  m.config_ = config_;
  m.params_.reserve(params_.size());
  for (const auto& p : params_) m.params_.push_back(Parameter{p.name, ad::leaf(p.var->value(), requires_grad)});
  return m;
}

Model Model::clone() const { return copy(true); }
Model Model::frozen() const { return copy(false); }

std::vector<std::pair<std::string, Shape>> unet_parameter_shapes(const UNetConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> shapes;
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
    shapes.emplace_back(name + ".weight", Shape{cout, cin, k, k});
    shapes.emplace_back(name + ".bias", Shape{cout});
  };
  auto double_conv = [&](const std::string& name, std::size_t cin, std::size_t cout) {
    conv(name + ".0", cin, cout, 3);
    conv(name + ".1", cout, cout, 3);
  };
  const std::size_t d = config.depth;
  double_conv("inc", config.in_channels, config.encoder_width(0));
  for (std::size_t i = 1; i <= d; ++i) {
    double_conv("down" + std::to_string(i), config.encoder_width(i - 1), config.encoder_width(i));
  }
  std::size_t ch = config.encoder_width(d);
  for (std::size_t j = 1; j <= d; ++j) {
    const std::size_t skip = config.encoder_width(d - j);
    const std::size_t out = j < d ? config.encoder_width(d - j - 1) : config.encoder_width(0);
    double_conv("up" + std::to_string(j), skip + ch, out);
    ch = out;
  }
  conv("outc", ch, config.out_channels, 1);
  return shapes;
}

Model unet_build(const UNetConfig& config, std::uint64_t seed) {
  const auto shapes = unet_parameter_shapes(config);
  std::mt19937_64 rng(derive_seed(seed, {0x756e6574}));
  std::vector<Tensor> tensors;
  tensors.reserve(shapes.size());
  for (const auto& [name, shape] : shapes) {
    Tensor t(shape);
    if (shape.size() == 4) {
      const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
      for (double& v : t.data()) v = static_cast<double>(static_cast<float>(normal(rng)));
    }
    tensors.push_back(std::move(t));
  }

  Model m;
  std::size_t next = 0;
  auto conv = [&](std::size_t in, const std::string& name, std::size_t padding) {
    Tensor w = std::move(tensors[next++]);
    Tensor b = std::move(tensors[next++]);
    return m.add_conv(in, std::move(w), std::move(b), padding, name);
  };
  auto double_conv = [&](std::size_t in, const std::string& name) {
    const auto a = m.add_relu(conv(in, name + ".0", 1));
    return m.add_relu(conv(a, name + ".1", 1));
  };

  const std::size_t d = config.depth;
  std::vector<std::size_t> skips;
  std::size_t cur = double_conv(m.add_input(), "inc");
  skips.push_back(cur);
  for (std::size_t i = 1; i <= d; ++i) {
    cur = double_conv(m.add_maxpool(cur), "down" + std::to_string(i));
    skips.push_back(cur);
  }
  for (std::size_t j = 1; j <= d; ++j) {
    const auto cat = m.add_concat(skips[d - j], m.add_upsample(cur));
    cur = double_conv(cat, "up" + std::to_string(j));
  }
  cur = conv(cur, "outc", 0);
  if (config.output_activation == OutputActivation::Sigmoid) cur = m.add_sigmoid(cur);
  m.set_output(cur);
  m.set_config(config);
  return m;
}

void round_parameters_to_float(Model& model) {
  for (const auto& p : model.parameters()) {
    for (double& v : p.var->mutable_value().data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace xdn::nn
