#include "xdn/metrics.hpp"

#include <cmath>
#include <string>

#include "xdn/filters.hpp"

namespace xdn::metrics {
namespace {

void require_same(const Image& a, const Image& b) {
  if (!a.same_dims(b))
    throw MetricError("image dims differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                      std::to_string(b.height()) + "x" + std::to_string(b.width()));
  if (a.empty()) throw MetricError("empty image");
}

double ssim_kernel(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

SsimWindow parse_window(std::string_view name) {
  if (name == "windowed" || name == "gaussian") return SsimWindow::Gaussian;
  if (name == "global") return SsimWindow::Global;
  throw MetricError("unknown metric mode: " + std::string(name) + " (expected windowed or global)");
}

std::string_view window_name(SsimWindow w) { return w == SsimWindow::Global ? "global" : "windowed"; }

double mse(const Image& a, const Image& b) {
  require_same(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const Image& clean, const Image& test, double max_value) {
  if (!(max_value > 0.0)) throw MetricError("psnr max value must be positive");
  const double m = mse(clean, test);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / m));
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  require_same(a, b);
  if (!(params.c1 > 0.0) || !(params.c2 > 0.0)) throw MetricError("ssim constants must be positive");

  if (params.window == SsimWindow::Global) {
    const double n = static_cast<double>(a.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      mx += a[i];
      my += b[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double dx = a[i] - mx, dy = b[i] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    return ssim_kernel(mx, my, vx / n, vy / n, cxy / n, params.c1, params.c2);
  }

  const std::size_t k = params.window_size;
  if (a.height() < k || a.width() < k)
    throw MetricError("image smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " ssim window");
  const auto g = filters::gaussian_kernel(params.window_sigma, k);
  double total = 0.0;
  const std::size_t oh = a.height() - k + 1, ow = a.width() - k + 1;
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double w = g[i * k + j];
          const double x = a.at(r + i, c + j), y = b.at(r + i, c + j);
          mx += w * x;
          my += w * y;
          sxx += w * (x * x);
          syy += w * (y * y);
          sxy += w * (x * y);
        }
      total += ssim_kernel(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my, params.c1, params.c2);
    }
  return total / static_cast<double>(oh * ow);
}

}  // namespace xdn::metrics
