#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "nets.hpp"
#include "reference_values.hpp"
#include "support.hpp"
#include "xdn/guided.hpp"
#include "xdn/kernels.hpp"

using namespace xdn;
using namespace xdn::xai;
using testing_support::uniform_tensor;

TEST(Sensitivity, DemoValues) {
  EXPECT_EQ(sensitivity_demo(1, 0, 0, 0), std::make_pair(0.25, 0.25));
  const auto [a, b] = sensitivity_demo(1, 0, 0, 0.5);
  EXPECT_EQ(a, 0.25);
  EXPECT_NEAR(b, ref::kSigmoidPrimeHalf, 1e-15);
  const auto [c, d] = sensitivity_demo(1, 0, 40, 1);
  EXPECT_LT(c, 1e-15);
  EXPECT_LT(d, 1e-15);
}

TEST(Guided, SingleSigmoidSaliency) {
  const auto m = nets::single_sigmoid(2.0);
  const auto r = guided_backward(m, Tensor({1, 1, 1, 1}, 0.0));
  EXPECT_EQ(r.saliency.values[0], 0.5);
}

TEST(Guided, ReluGatesOnBothSigns) {
  nn::Model m;
  m.set_output(m.add_relu(m.add_input()));
  const Tensor x({1, 1, 1, 3}, {1.0, 2.0, -0.5});
  const Tensor seed({1, 1, 1, 3}, {0.5, -0.3, 0.2});
  const auto r = guided_backward(m, x, &seed);
  EXPECT_EQ(r.saliency.values.values(), (std::vector<double>{0.5, 0.0, 0.0}));
}

TEST(Guided, RejectsSeedOfWrongShape) {
  const auto m = nets::single_sigmoid(1.0);
  const Tensor seed({1, 1, 2, 2}, 1.0);
  EXPECT_THROW(guided_backward(m, Tensor({1, 1, 1, 1}), &seed), ShapeError);
}

TEST(Guided, GatingSoundOnEveryRelu) {
  GuidedOptions opts;
  opts.keep_signals = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = nets::small_unet(40 + s);
    const auto x = uniform_tensor({1, 1, 16, 16}, 50 + s, 0, 1);
    const auto seed = uniform_tensor({1, 1, 16, 16}, 60 + s);
    const auto r = guided_backward(m, x, &seed, opts);
    const auto trace = m.trace(ad::constant(x));
    std::size_t relus = 0;
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
      if (m.layers()[i].kind != nn::LayerKind::Relu) continue;
      ++relus;
      const Tensor& fwd = trace.values[m.layers()[i].inputs[0]]->value();
      const Tensor& in = r.gates.incoming[i];
      const Tensor& out = r.gates.outgoing[i];
      ASSERT_EQ(in.shape(), fwd.shape());
      for (std::size_t k = 0; k < fwd.size(); ++k) {
        if (fwd[k] <= 0.0 || in[k] <= 0.0) {
          ASSERT_EQ(out[k], 0.0);
        } else {
          ASSERT_EQ(out[k], in[k]);
        }
        ASSERT_EQ(r.gates.forward_positive[i][k], fwd[k] > 0.0 ? 1.0 : 0.0);
      }
    }
    EXPECT_EQ(relus, 18u);
  }
}

TEST(Guided, ConvReluConvMatchesHandComposition) {
  const auto w1 = uniform_tensor({3, 1, 3, 3}, 1);
  const auto w2 = uniform_tensor({1, 3, 3, 3}, 2);
  nn::Model m;
  const auto c1 = m.add_conv(m.add_input(), w1, std::nullopt, 1, "a");
  m.set_output(m.add_conv(m.add_relu(c1), w2, std::nullopt, 1, "b"));
  const auto x = uniform_tensor({1, 1, 6, 6}, 3);
  const auto pre = kernels::conv2d_forward(x, w1, nullptr, 1);
  Tensor r = kernels::conv2d_backward_input(Tensor({1, 1, 6, 6}, 1.0), w2, pre.shape(), 1);
  for (std::size_t i = 0; i < r.size(); ++i)
    if (!(r[i] > 0.0 && pre[i] > 0.0)) r[i] = 0.0;
  const auto expected = kernels::conv2d_backward_input(r, w1, x.shape(), 1);
  EXPECT_LT(max_abs_diff(guided_backward(m, x).saliency.values, expected), 1e-14);
}

TEST(Guided, EqualsVanillaGradientOnPositiveNetwork) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = nets::positive_net(70 + s);
    const auto x = uniform_tensor({1, 1, 8, 8}, 80 + s, 0.1, 1.0);
    const auto g = guided_backward(m, x).saliency.values;
    EXPECT_LT(max_abs_diff(g, input_gradient(m, x)), 1e-12);
  }
}

TEST(Guided, SaliencyShapeAndFiniteness) {
  const auto m = nets::small_unet(3);
  const auto x = uniform_tensor({1, 1, 32, 16}, 4, 0, 1);
  const auto r = guided_backward(m, x);
  EXPECT_EQ(r.saliency.values.shape(), x.shape());
  EXPECT_TRUE(r.saliency.values.all_finite());
}

TEST(SaliencyGraph, ValueMatchesProceduralPass) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = nets::small_unet(90 + s).frozen();
    const auto x = uniform_tensor({1, 1, 16, 16}, 100 + s, 0, 1);
    const auto r = guided_backward(m, x);
    const auto g = saliency_graph(m, ad::constant(x), r.gates);
    EXPECT_LT(max_abs_diff(g->value(), r.saliency.values), 1e-10);
  }
}

TEST(SaliencyGraph, RejectsStaleGates) {
  const auto m = nets::small_unet(1).frozen();
  const auto r = guided_backward(m, Tensor({1, 1, 16, 16}, 0.5));
  EXPECT_THROW(saliency_graph(m, ad::constant(Tensor({1, 1, 32, 16}, 0.5)), r.gates), ShapeError);
}

TEST(SaliencyGraph, FeatureLossGradientWithFrozenGates) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = nets::small_unet(110 + s).frozen();
    const auto x = uniform_tensor({1, 1, 16, 16}, 120 + s, 0, 1);
    const auto target = guided_backward(m, uniform_tensor({1, 1, 16, 16}, 130 + s, 0, 1)).saliency.values;
    const auto gates = guided_backward(m, x).gates;
    const double err = gradcheck::check(
        [&](const std::vector<ad::Var>& v) {
          return feature_preserving_loss(saliency_graph(m, v[0], gates), target);
        },
        {x});
    EXPECT_LT(err, 1e-3) << "trial " << s;
  }
}

TEST(SaliencyGraph, SigmoidChainNeedsNoFreezing) {
  const auto m = nets::sigmoid_chain(7).frozen();
  const auto x = uniform_tensor({1, 1, 6, 6}, 8);
  const auto target = uniform_tensor({1, 1, 6, 6}, 9, -0.2, 0.2);
  auto xv = ad::leaf(x, true);
  ad::backward(feature_preserving_loss(saliency_graph(m, xv, guided_backward(m, x).gates), target));
  auto full = [&](const Tensor& in) {
    const auto f = guided_backward(m, in).saliency.values;
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += (f[i] - target[i]) * (f[i] - target[i]);
    return acc / static_cast<double>(f.size());
  };
  EXPECT_LT(gradcheck::rel_error(xv->grad(), ad::finite_difference_gradient(full, x)), 1e-6);
}

TEST(Guided, LinearInSeedWithSignalGatesOff) {
  GuidedOptions opts;
  opts.gate_on_signal = false;
  const auto m = nets::small_unet(11);
  const auto x = uniform_tensor({1, 1, 16, 16}, 12, 0, 1);
  const auto a = uniform_tensor({1, 1, 16, 16}, 13);
  const auto b = uniform_tensor({1, 1, 16, 16}, 14);
  Tensor ab = a;
  ab += b;
  Tensor sum = guided_backward(m, x, &a, opts).saliency.values;
  sum += guided_backward(m, x, &b, opts).saliency.values;
  EXPECT_LT(max_abs_diff(guided_backward(m, x, &ab, opts).saliency.values, sum), 1e-12);
}

TEST(FeatureLoss, ClosedFormsAndDirectSum) {
  const auto f = uniform_tensor({1, 1, 5, 7}, 15);
  EXPECT_EQ(feature_preserving_loss(ad::constant(f), f)->value()[0], 0.0);
  EXPECT_EQ(feature_preserving_loss(ad::constant(Tensor({1, 1, 1, 1}, 0.5)), Tensor({1, 1, 1, 1}, 0.0))->value()[0],
            0.25);
  const auto g = uniform_tensor({1, 1, 5, 7}, 16);
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += (f[i] - g[i]) * (f[i] - g[i]);
  const double l = feature_preserving_loss(ad::constant(f), g)->value()[0];
  EXPECT_NEAR(l, acc / 35.0, 1e-12);
  EXPECT_GE(l, 0.0);
  EXPECT_THROW(feature_preserving_loss(ad::constant(f), Tensor({1, 1, 5, 6})), ShapeError);
}

TEST(FeatureLoss, NoGradientIntoTarget) {
  auto a = ad::leaf(uniform_tensor({1, 1, 3, 3}, 17), true);
  const auto target = uniform_tensor({1, 1, 3, 3}, 18);
  const auto l = feature_preserving_loss(a, target);
  ASSERT_EQ(l->parents().size(), 2u);
  EXPECT_FALSE(l->parents()[1]->requires_grad());
}

TEST(Visualize, NormalisesToUnitInterval) {
  SaliencyMap c{Tensor({1, 1, 3, 3}, 0.7), ""};
  const auto flat = saliency_visualize(c);
  for (double v : flat.pixels()) EXPECT_EQ(v, 0.5);
  SaliencyMap sym{Tensor({1, 1, 1, 3}, {-2.0, 0.0, 2.0}), ""};
  const auto s = saliency_visualize(sym);
  EXPECT_EQ(std::vector<double>(s.pixels().begin(), s.pixels().end()), (std::vector<double>{0.0, 0.5, 1.0}));
  for (std::uint64_t k = 0; k < 20; ++k) {
    SaliencyMap r{uniform_tensor({1, 1, 8, 8}, 200 + k, -5, 5), ""};
    const auto img = saliency_visualize(r);
    for (double v : img.pixels()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}
