#include <gtest/gtest.h>

#include "reference_values.hpp"
#include "support.hpp"
#include "xdn/kernels.hpp"

using namespace xdn;
using testing_support::uniform_tensor;

namespace {

Tensor reference_conv(const Tensor& x, const Tensor& w, const Tensor* b, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t OH = H + 2 * pad - K + 1, OW = W + 2 * pad - K + 1;
  Tensor out({B, O, OH, OW});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t r = 0; r < OH; ++r)
        for (std::size_t c = 0; c < OW; ++c) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t ci = 0; ci < C; ++ci)
            for (std::size_t i = 0; i < K; ++i)
              for (std::size_t j = 0; j < K; ++j) {
                const auto rr = static_cast<std::ptrdiff_t>(r + i) - static_cast<std::ptrdiff_t>(pad);
                const auto cc = static_cast<std::ptrdiff_t>(c + j) - static_cast<std::ptrdiff_t>(pad);
                if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(H) || cc >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += x.at(n, ci, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) * w.at(o, ci, i, j);
              }
          out.at(n, o, r, c) = acc;
        }
  return out;
}

}  // namespace

TEST(Conv2d, ZeroInputGivesZero) {
  const Tensor x({1, 1, 3, 3}, 0.0);
  const auto w = uniform_tensor({1, 1, 3, 3}, 1);
  const Tensor b({1}, 0.0);
  const auto y = kernels::conv2d_forward(x, w, &b, 1);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  const auto x = uniform_tensor({1, 1, 3, 3}, 2);
  const Tensor w({1, 1, 1, 1}, 1.0);
  const Tensor b({1}, 0.0);
  EXPECT_EQ(kernels::conv2d_forward(x, w, &b, 0), x);
}

TEST(Conv2d, MatchesFrozenReference) {
  const Tensor x({1, 2, 5, 5}, testing_support::uniform(50, 11, -1, 1));
  const Tensor w({3, 2, 3, 3}, testing_support::uniform(54, 12, -1, 1));
  const Tensor b({3}, testing_support::uniform(3, 13, -1, 1));
  const auto y = kernels::conv2d_forward(x, w, &b, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 5, 5}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref::kConv2dOut[i], 1e-12) << i;
}

TEST(Conv2d, MatchesLoopOracleOnRandomShapes) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t k = s % 2 == 0 ? 3 : 1;
    const std::size_t pad = k == 3 ? s % 3 % 2 : 0;
    const auto x = uniform_tensor({2, 3, 6, 7}, 100 + s);
    const auto w = uniform_tensor({4, 3, k, k}, 200 + s);
    const auto b = uniform_tensor({4}, 300 + s);
    EXPECT_LT(max_abs_diff(kernels::conv2d_forward(x, w, &b, pad), reference_conv(x, w, &b, pad)), 1e-12);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  EXPECT_THROW(kernels::conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), nullptr, 1), ShapeError);
  EXPECT_THROW(kernels::conv2d_forward(Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), nullptr, 0), ShapeError);
}

TEST(Conv2d, InputAdjointIdentity) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = uniform_tensor({2, 3, 6, 5}, 400 + s);
    const auto w = uniform_tensor({4, 3, 3, 3}, 500 + s);
    const auto y = uniform_tensor({2, 4, 6, 5}, 600 + s);
    const double lhs = dot(kernels::conv2d_forward(x, w, nullptr, 1), y);
    const double rhs = dot(x, kernels::conv2d_backward_input(y, w, x.shape(), 1));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Conv2d, FlippedKernelReproducesInputAdjoint) {
  const auto w = uniform_tensor({4, 3, 3, 3}, 7);
  const auto g = uniform_tensor({1, 4, 5, 5}, 8);
  const auto via_adjoint = kernels::conv2d_backward_input(g, w, {1, 3, 5, 5}, 1);
  const auto via_flip = kernels::conv2d_forward(g, kernels::flip_transpose_kernel(w), nullptr, 1);
  EXPECT_LT(max_abs_diff(via_adjoint, via_flip), 1e-12);
}

TEST(MaxPool, PicksWindowMaximum) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = kernels::maxpool2x2_forward(x);
  EXPECT_EQ(r.output.values(), std::vector<double>{4});
  EXPECT_EQ(r.argmax, std::vector<std::uint32_t>{3});
}

TEST(MaxPool, TiesResolveToFirstInRowMajorOrder) {
  const Tensor x({1, 1, 4, 4}, 0.5);
  const auto r = kernels::maxpool2x2_forward(x);
  EXPECT_EQ(r.argmax, (std::vector<std::uint32_t>{0, 2, 8, 10}));
  const auto g = kernels::maxpool2x2_scatter(Tensor({1, 1, 2, 2}, 1.0), r.argmax, x.shape());
  EXPECT_EQ(g.values(), (std::vector<double>{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0}));
}

TEST(MaxPool, MatchesWindowScanAndConservesMass) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = uniform_tensor({2, 2, 8, 8}, 700 + s);
    const auto r = kernels::maxpool2x2_forward(x);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 0; j < 4; ++j) {
            double best = -1e300;
            for (std::size_t a = 0; a < 2; ++a)
              for (std::size_t b = 0; b < 2; ++b) best = std::max(best, x.at(n, c, 2 * i + a, 2 * j + b));
            EXPECT_EQ(r.output.at(n, c, i, j), best);
          }
    const auto go = uniform_tensor(r.output.shape(), 800 + s);
    const auto gi = kernels::maxpool2x2_scatter(go, r.argmax, x.shape());
    double sum_o = 0, sum_i = 0;
    for (double v : go.values()) sum_o += v;
    for (double v : gi.values()) sum_i += v;
    EXPECT_NEAR(sum_o, sum_i, 1e-12);
    for (std::size_t k = 0; k < r.argmax.size(); ++k) EXPECT_EQ(gi[r.argmax[k]], go[k]);
  }
}

TEST(MaxPool, RejectsOddExtent) { EXPECT_THROW(kernels::maxpool2x2_forward(Tensor({1, 1, 3, 4})), ShapeError); }

TEST(Upsample, ConstantStaysConstant) {
  const auto y = kernels::upsample2x_forward(Tensor({1, 2, 3, 5}, 0.3));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 6, 10}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.3);
  const auto one = kernels::upsample2x_forward(Tensor({1, 1, 1, 1}, 0.7));
  EXPECT_EQ(one.values(), (std::vector<double>(4, 0.7)));
}

TEST(Upsample, MatchesFrozenReference) {
  const Tensor x({1, 1, 3, 4}, testing_support::uniform(12, 21));
  const auto y = kernels::upsample2x_forward(x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref::kUpsampleOut[i], 1e-14) << i;
}

TEST(Upsample, AdjointIdentity) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = uniform_tensor({2, 3, 4, 5}, 900 + s);
    const auto y = uniform_tensor({2, 3, 8, 10}, 950 + s);
    EXPECT_NEAR(dot(kernels::upsample2x_forward(x), y), dot(x, kernels::upsample2x_adjoint(y)), 1e-10);
  }
}

TEST(Resample, MatchesFrozenReference) {
  const Tensor x({1, 1, 12, 12}, testing_support::uniform(144, 22));
  const auto y = kernels::bilinear_resample(x, 8, 16);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref::kResizeOut[i], 1e-14) << i;
}

TEST(Concat, SliceRoundTrip) {
  const auto a = uniform_tensor({2, 3, 4, 4}, 1);
  const auto b = uniform_tensor({2, 2, 4, 4}, 2);
  const auto c = kernels::concat_channels(a, b);
  EXPECT_EQ(kernels::slice_channels(c, 0, 3), a);
  EXPECT_EQ(kernels::slice_channels(c, 3, 2), b);
  EXPECT_EQ(kernels::concat_channels(a, Tensor({2, 0, 4, 4})), a);
  EXPECT_THROW(kernels::concat_channels(a, Tensor({2, 1, 5, 4})), ShapeError);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(kernels::sigmoid(0.0), 0.5);
  EXPECT_GT(kernels::sigmoid(-800.0), -1e-300);
  EXPECT_EQ(kernels::sigmoid(800.0), 1.0);
  EXPECT_NEAR(kernels::sigmoid(-30.0), std::exp(-30.0), 1e-20);
}

TEST(TensorType, ShapeInvariantsAndFiniteness) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), ShapeError);
  Tensor t({2, 2}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  t[1] = INFINITY;
  EXPECT_FALSE(t.all_finite());
}
