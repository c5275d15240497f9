#include <benchmark/benchmark.h>

#include "xdn/autodiff.hpp"
#include "xdn/dataset.hpp"
#include "xdn/filters.hpp"
#include "xdn/guided.hpp"
#include "xdn/kernels.hpp"
#include "xdn/metrics.hpp"
#include "xdn/model.hpp"
#include "xdn/noise.hpp"
#include "xdn/train.hpp"

using namespace xdn;

namespace {

Tensor filled(Shape s, double v = 0.25) {
  Tensor t(std::move(s));
  double x = v;
  for (double& e : t.data()) {
    x = x * 1.7 + 0.31;
    x -= static_cast<long>(x);
    e = x - 0.5;
  }
  return t;
}

nn::Model unet(std::size_t width) {
  nn::UNetConfig cfg;
  cfg.base_width = width;
  return nn::unet_build(cfg, 1);
}

}  // namespace

static void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const auto x = filled({1, c, side, side});
  const auto w = filled({c, c, 3, 3});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, nullptr, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * c * 9 * side * side));
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 64})->Args({16, 32})->Args({64, 64})->Unit(benchmark::kMicrosecond);

static void BM_Conv3x3BackwardInput(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto g = filled({1, c, 64, 64});
  const auto w = filled({c, c, 3, 3});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_backward_input(g, w, {1, c, 64, 64}, 1));
}
BENCHMARK(BM_Conv3x3BackwardInput)->Arg(8)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_Upsample(benchmark::State& state) {
  const auto x = filled({1, 16, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::upsample2x_forward(x));
}
BENCHMARK(BM_Upsample)->Unit(benchmark::kMicrosecond);

static void BM_UNetInfer(benchmark::State& state) {
  const auto m = unet(static_cast<std::size_t>(state.range(0)));
  const auto x = data::generate_phantom(static_cast<std::size_t>(state.range(1)), 1, 0).to_tensor();
  for (auto _ : state) benchmark::DoNotOptimize(m.infer(x));
}
BENCHMARK(BM_UNetInfer)->Args({8, 64})->Args({8, 256})->Args({64, 64})->Unit(benchmark::kMillisecond);

static void BM_UNetForwardBackward(benchmark::State& state) {
  auto m = unet(8);
  const auto x = data::generate_phantom(64, 1, 0).to_tensor();
  for (auto _ : state) {
    m.zero_grad();
    ad::backward(ad::mse_mean(m.forward(x), ad::constant(x)));
  }
}
BENCHMARK(BM_UNetForwardBackward)->Unit(benchmark::kMillisecond);

static void BM_GuidedBackward(benchmark::State& state) {
  const auto m = unet(8);
  const auto x = data::generate_phantom(64, 1, 0).to_tensor();
  for (auto _ : state) benchmark::DoNotOptimize(xai::guided_backward(m, x));
}
BENCHMARK(BM_GuidedBackward)->Unit(benchmark::kMillisecond);

// One L_FP gradient: guided pass for gates, saliency graph, backward to the input.
static void BM_FeatureLossGradient(benchmark::State& state) {
  const auto m = unet(8).frozen();
  const auto clean = data::generate_phantom(64, 1, 0).to_tensor();
  const auto f_clean = xai::guided_backward(m, clean).saliency.values;
  const auto den = data::generate_phantom(64, 1, 1).to_tensor();
  for (auto _ : state) {
    auto x = ad::leaf(den, true);
    const auto gates = xai::guided_backward(m, den).gates;
    ad::backward(xai::feature_preserving_loss(xai::saliency_graph(m, x, gates), f_clean));
    benchmark::DoNotOptimize(x->grad());
  }
}
BENCHMARK(BM_FeatureLossGradient)->Unit(benchmark::kMillisecond);

static void BM_ApplyNoise(benchmark::State& state) {
  const auto kind = noise::kAllKinds[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(noise::kind_name(kind)));
  const auto img = data::generate_phantom(256, 1, 0);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(noise::apply_noise(img, noise::NoiseSpec::make(kind, seed++)));
}
BENCHMARK(BM_ApplyNoise)->DenseRange(0, 12)->Unit(benchmark::kMicrosecond);

static void BM_Filter(benchmark::State& state) {
  const auto& name = filters::filter_names()[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(name);
  const auto img = noise::apply_noise(data::generate_phantom(256, 1, 0),
                                      noise::NoiseSpec::make(noise::NoiseKind::Gaussian, 1))
                       .noisy;
  for (auto _ : state) benchmark::DoNotOptimize(filters::apply_named(name, img));
}
BENCHMARK(BM_Filter)->DenseRange(0, 7)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  metrics::SsimParams p;
  if (state.range(0) == 1) p.window = metrics::SsimWindow::Global;
  state.SetLabel(std::string(metrics::window_name(p.window)));
  const auto a = data::generate_phantom(256, 1, 0);
  const auto b = noise::apply_noise(a, noise::NoiseSpec::make(noise::NoiseKind::Gaussian, 1)).noisy;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b, p));
}
BENCHMARK(BM_Ssim)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
