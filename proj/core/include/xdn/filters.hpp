#pragma once

// Classical denoising baselines. Every filter uses the same mirror border
// (half-sample symmetric: ... b a | a b c ... ) so comparisons are fair.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xdn/image.hpp"

namespace xdn::filters {

class FilterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mirror index for half-sample symmetric extension.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

Image mean_filter(const Image& img, std::size_t k = 3);
Image median_filter(const Image& img, std::size_t k = 3);
Image gaussian_filter(const Image& img, double sigma = 1.0, std::size_t k = 5);

/// Normalised k x k Gaussian weights (row-major).
std::vector<double> gaussian_kernel(double sigma, std::size_t k);

Image bilateral_filter(const Image& img, double sigma_s = 2.0, double sigma_r = 0.1, std::size_t k = 5);

/// Lee local-statistics Wiener filter. When `noise_var` is unset it is the
/// median of the local variances.
Image wiener_filter(const Image& img, std::size_t k = 5, std::optional<double> noise_var = std::nullopt);

Image nl_means(const Image& img, std::size_t patch = 5, std::size_t search = 11, double h = 0.08);

enum class ThresholdMode { Soft, Hard };

struct WaveletOptions {
  std::size_t levels = 3;
  ThresholdMode mode = ThresholdMode::Soft;
  /// Fixed threshold; unset means the universal threshold sigma * sqrt(2 ln N)
  /// with sigma = MAD(finest diagonal band) / 0.6745.
  std::optional<double> threshold;
  bool clip = true;
};

Image wavelet_denoise(const Image& img, const WaveletOptions& options = {});

/// Orthonormal multi-level Haar analysis / synthesis on a (H, W) image whose
/// extents are divisible by 2^levels. Coefficients use the usual Mallat layout.
/// wavelet_denoise mirror-pads other sizes and crops the result.
Image haar_forward(const Image& img, std::size_t levels);
Image haar_inverse(const Image& coeffs, std::size_t levels);

/// Pixel-wise mean of mean_filter, median_filter and gaussian_filter.
Image combined_filter(const Image& img);

/// Filter by name with default parameters: mean, median, gaussian, bilateral,
/// wiener, nlmeans, wavelet, combined.
Image apply_named(std::string_view name, const Image& img);
const std::vector<std::string>& filter_names();

}  // namespace xdn::filters
