#pragma once

#include <stdexcept>
#include <string_view>

#include "xdn/image.hpp"

namespace xdn::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kPsnrCap = 100.0;

enum class SsimWindow { Global, Gaussian };

struct SsimParams {
  double c1 = 1e-4;  // (0.01 * L)^2 with L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
  SsimWindow window = SsimWindow::Gaussian;
  std::size_t window_size = 11;
  double window_sigma = 1.5;
};

SsimWindow parse_window(std::string_view name);  // "windowed" | "global"
std::string_view window_name(SsimWindow w);

double mse(const Image& a, const Image& b);

/// 10 log10(max^2 / mse); identical images report kPsnrCap.
double psnr(const Image& clean, const Image& test, double max_value = 1.0);

/// Global mode evaluates the SSIM expression once over whole-image moments.
/// Gaussian mode averages it over every fully contained window (no padding);
/// images smaller than the window are rejected. Moments are population moments.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

}  // namespace xdn::metrics
