#pragma once

// Small networks shared by the unit and acceptance suites.

#include <cstdint>
#include <random>

#include "xdn/model.hpp"
#include "xdn/rng.hpp"

namespace nets {

/// Base-width 2, depth 4 U-Net with small random biases so no unit sits at a
/// symmetric starting point.
inline xdn::nn::Model small_unet(std::uint64_t seed, std::size_t base_width = 2) {
  xdn::nn::UNetConfig cfg;
  cfg.base_width = base_width;
  auto m = xdn::nn::unet_build(cfg, seed);
  std::mt19937_64 rng(xdn::derive_seed(seed, {0x62696173}));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const auto& p : m.parameters())
    if (p.var->shape().size() == 1)
      for (double& v : p.var->mutable_value().data()) v = static_cast<float>(u(rng));
  return m;
}

/// Input -> Conv(1->1, 1x1, weight w, no bias) -> Sigmoid.
inline xdn::nn::Model single_sigmoid(double w) {
  xdn::nn::Model m;
  const auto in = m.add_input();
  const auto c = m.add_conv(in, xdn::Tensor({1, 1, 1, 1}, w), std::nullopt, 0, "c");
  m.set_output(m.add_sigmoid(c));
  return m;
}

/// Conv -> ReLU -> MaxPool -> Conv -> ReLU -> Upsample -> Conv, all weights and
/// biases positive.
inline xdn::nn::Model positive_net(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.5);
  auto fill = [&](xdn::Shape s) {
    xdn::Tensor t(std::move(s));
    for (double& v : t.data()) v = u(rng);
    return t;
  };
  xdn::nn::Model m;
  auto x = m.add_input();
  x = m.add_relu(m.add_conv(x, fill({3, 1, 3, 3}), fill({3}), 1, "a"));
  x = m.add_maxpool(x);
  x = m.add_relu(m.add_conv(x, fill({4, 3, 3, 3}), fill({4}), 1, "b"));
  x = m.add_upsample(x);
  m.set_output(m.add_conv(x, fill({1, 4, 3, 3}), fill({1}), 1, "c"));
  return m;
}

/// Conv -> Sigmoid -> Conv -> Sigmoid with mixed-sign weights and no ReLU.
inline xdn::nn::Model sigmoid_chain(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](xdn::Shape s) {
    xdn::Tensor t(std::move(s));
    for (double& v : t.data()) v = u(rng);
    return t;
  };
  xdn::nn::Model m;
  auto x = m.add_input();
  x = m.add_sigmoid(m.add_conv(x, fill({3, 1, 3, 3}), fill({3}), 1, "a"));
  x = m.add_sigmoid(m.add_conv(x, fill({1, 3, 3, 3}), fill({1}), 1, "b"));
  m.set_output(x);
  return m;
}

}  // namespace nets
