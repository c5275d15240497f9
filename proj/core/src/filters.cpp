#include "xdn/filters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace xdn::filters {
namespace {

void require_odd(std::size_t k, const char* what) {
  if (k == 0 || k % 2 == 0) throw FilterError(std::string(what) + ": window size must be odd, got " + std::to_string(k));
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw FilterError(std::string(what) + " must be positive and finite");
}

void require_nonempty(const Image& img) {
  if (img.empty()) throw FilterError("filter input is empty");
}

// Mirror-padded copy with `pad` pixels on every side.
struct Padded {
  std::size_t pad, h, w, stride;
  std::vector<double> data;
  double at(std::size_t r, std::size_t c) const { return data[r * stride + c]; }
};

Padded pad_mirror(const Image& img, std::size_t pad) {
  Padded p{pad, img.height(), img.width(), img.width() + 2 * pad, {}};
  const auto ph = img.height() + 2 * pad;
  p.data.resize(ph * p.stride);
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  for (std::size_t r = 0; r < ph; ++r) {
    const auto sr = reflect_index(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(pad), h);
    for (std::size_t c = 0; c < p.stride; ++c) {
      const auto sc = reflect_index(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(pad), w);
      p.data[r * p.stride + c] = img.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
    }
  }
  return p;
}

// Weighted k x k correlation with a fixed kernel.
Image correlate(const Image& img, const std::vector<double>& kernel, std::size_t k) {
  const auto p = pad_mirror(img, k / 2);
  Image out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) acc += kernel[i * k + j] * p.at(r + i, c + j);
      out.at(r, c) = acc;
    }
  return out;
}

double median_of(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// One level of the separable orthonormal Haar step on the top-left h x w block.
void haar_step(std::vector<double>& a, std::size_t stride, std::size_t h, std::size_t w) {
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<double> tmp(std::max(h, w));
  for (std::size_t r = 0; r < h; ++r) {
    double* row = a.data() + r * stride;
    for (std::size_t c = 0; c < w / 2; ++c) {
      tmp[c] = (row[2 * c] + row[2 * c + 1]) * s;
      tmp[w / 2 + c] = (row[2 * c] - row[2 * c + 1]) * s;
    }
    std::copy_n(tmp.begin(), w, row);
  }
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      const double x0 = a[2 * r * stride + c];
      const double x1 = a[(2 * r + 1) * stride + c];
      tmp[r] = (x0 + x1) * s;
      tmp[h / 2 + r] = (x0 - x1) * s;
    }
    for (std::size_t r = 0; r < h; ++r) a[r * stride + c] = tmp[r];
  }
}

void haar_step_inverse(std::vector<double>& a, std::size_t stride, std::size_t h, std::size_t w) {
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<double> tmp(std::max(h, w));
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      const double lo = a[r * stride + c];
      const double hi = a[(h / 2 + r) * stride + c];
      tmp[2 * r] = (lo + hi) * s;
      tmp[2 * r + 1] = (lo - hi) * s;
    }
    for (std::size_t r = 0; r < h; ++r) a[r * stride + c] = tmp[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    double* row = a.data() + r * stride;
    for (std::size_t c = 0; c < w / 2; ++c) {
      tmp[2 * c] = (row[c] + row[w / 2 + c]) * s;
      tmp[2 * c + 1] = (row[c] - row[w / 2 + c]) * s;
    }
    std::copy_n(tmp.begin(), w, row);
  }
}

void require_haar_dims(const Image& img, std::size_t levels) {
  if (levels == 0) throw FilterError("wavelet levels must be >= 1");
  const std::size_t m = std::size_t{1} << levels;
  if (img.height() % m != 0 || img.width() % m != 0)
    throw FilterError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                      " is not divisible by 2^" + std::to_string(levels));
}

}  // namespace

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Image mean_filter(const Image& img, std::size_t k) {
  require_odd(k, "mean_filter");
  require_nonempty(img);
  return correlate(img, std::vector<double>(k * k, 1.0 / static_cast<double>(k * k)), k);
}

Image median_filter(const Image& img, std::size_t k) {
  require_odd(k, "median_filter");
  require_nonempty(img);
  const auto p = pad_mirror(img, k / 2);
  Image out(img.height(), img.width());
  std::vector<double> window(k * k);
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) window[i * k + j] = p.at(r + i, c + j);
      out.at(r, c) = median_of(window);
    }
  return out;
}

std::vector<double> gaussian_kernel(double sigma, std::size_t k) {
  require_odd(k, "gaussian_kernel");
  require_positive(sigma, "gaussian sigma");
  std::vector<double> g(k * k);
  const auto half = static_cast<double>(k / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double dy = static_cast<double>(i) - half;
      const double dx = static_cast<double>(j) - half;
      g[i * k + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      sum += g[i * k + j];
    }
  for (auto& v : g) v /= sum;
  return g;
}

Image gaussian_filter(const Image& img, double sigma, std::size_t k) {
  require_nonempty(img);
  return correlate(img, gaussian_kernel(sigma, k), k);
}

Image bilateral_filter(const Image& img, double sigma_s, double sigma_r, std::size_t k) {
  require_odd(k, "bilateral_filter");
  require_positive(sigma_s, "bilateral sigma_s");
  if (!(sigma_r > 0.0)) throw FilterError("bilateral sigma_r must be positive");
  require_nonempty(img);
  const auto spatial = gaussian_kernel(sigma_s, k);
  const auto p = pad_mirror(img, k / 2);
  const double inv_r = std::isinf(sigma_r) ? 0.0 : 1.0 / (2.0 * sigma_r * sigma_r);
  Image out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) {
      const double centre = img.at(r, c);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double v = p.at(r + i, c + j);
          const double d = v - centre;
          const double wgt = spatial[i * k + j] * std::exp(-d * d * inv_r);
          num += wgt * v;
          den += wgt;
        }
      out.at(r, c) = num / den;
    }
  return out;
}

Image wiener_filter(const Image& img, std::size_t k, std::optional<double> noise_var) {
  require_odd(k, "wiener_filter");
  require_nonempty(img);
  if (noise_var && !(*noise_var >= 0.0)) throw FilterError("wiener noise variance must be >= 0");
  const auto p = pad_mirror(img, k / 2);
  const double n = static_cast<double>(k * k);
  std::vector<double> mu(img.size()), var(img.size());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double v = p.at(r + i, c + j);
          s += v;
          s2 += v * v;
        }
      const double m = s / n;
      mu[r * img.width() + c] = m;
      var[r * img.width() + c] = std::max(0.0, s2 / n - m * m);
    }
  double nv = 0.0;
  if (noise_var) {
    nv = *noise_var;
  } else {
    auto copy = var;
    nv = median_of(copy);
  }
  Image out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = var[i];
    const double den = std::max(v, nv);
    const double gain = den > 0.0 ? std::max(0.0, v - nv) / den : 0.0;
    out[i] = mu[i] + gain * (img[i] - mu[i]);
  }
  return out;
}

Image nl_means(const Image& img, std::size_t patch, std::size_t search, double h) {
  require_odd(patch, "nl_means patch");
  require_odd(search, "nl_means search");
  if (search < patch) throw FilterError("nl_means: search window smaller than patch");
  require_positive(h, "nl_means h");
  require_nonempty(img);
  const std::size_t ph = patch / 2, sh = search / 2;
  const auto p = pad_mirror(img, ph + sh);
  const double inv_h2 = 1.0 / (h * h);
  const double inv_np = 1.0 / static_cast<double>(patch * patch);
  Image out(img.height(), img.width());
  std::vector<double> dist(search * search);
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) {
      // Patch centres in padded coordinates.
      const std::size_t pr = r + ph + sh, pc = c + ph + sh;
      for (std::size_t si = 0; si < search; ++si)
        for (std::size_t sj = 0; sj < search; ++sj) {
          const std::size_t qr = pr + si - sh, qc = pc + sj - sh;
          double d2 = 0.0;
          for (std::size_t a = 0; a < patch; ++a)
            for (std::size_t b = 0; b < patch; ++b) {
              const double diff = p.at(pr + a - ph, pc + b - ph) - p.at(qr + a - ph, qc + b - ph);
              d2 += diff * diff;
            }
          dist[si * search + sj] = d2 * inv_np;
        }
      // The centre has distance 0, so the largest weight is exactly 1.
      double num = 0.0, den = 0.0;
      for (std::size_t si = 0; si < search; ++si)
        for (std::size_t sj = 0; sj < search; ++sj) {
          const double wgt = std::exp(-dist[si * search + sj] * inv_h2);
          num += wgt * p.at(pr + si - sh, pc + sj - sh);
          den += wgt;
        }
      out.at(r, c) = num / den;
    }
  return out;
}

Image haar_forward(const Image& img, std::size_t levels) {
  require_haar_dims(img, levels);
  std::vector<double> a(img.pixels().begin(), img.pixels().end());
  std::size_t h = img.height(), w = img.width();
  for (std::size_t l = 0; l < levels; ++l, h /= 2, w /= 2) haar_step(a, img.width(), h, w);
  return Image(img.height(), img.width(), std::move(a));
}

Image haar_inverse(const Image& coeffs, std::size_t levels) {
  require_haar_dims(coeffs, levels);
  std::vector<double> a(coeffs.pixels().begin(), coeffs.pixels().end());
  for (std::size_t l = levels; l-- > 0;)
    haar_step_inverse(a, coeffs.width(), coeffs.height() >> l, coeffs.width() >> l);
  return Image(coeffs.height(), coeffs.width(), std::move(a));
}

Image wavelet_denoise(const Image& img, const WaveletOptions& options) {
  require_nonempty(img);
  if (options.levels == 0) throw FilterError("wavelet levels must be >= 1");
  if (options.threshold && !(*options.threshold >= 0.0)) throw FilterError("wavelet threshold must be >= 0");
  const std::size_t m = std::size_t{1} << options.levels;
  const std::size_t H = (img.height() + m - 1) / m * m;
  const std::size_t W = (img.width() + m - 1) / m * m;
  Image work(H, W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      work.at(r, c) = img.at(static_cast<std::size_t>(reflect_index(static_cast<std::ptrdiff_t>(r),
                                                                    static_cast<std::ptrdiff_t>(img.height()))),
                             static_cast<std::size_t>(reflect_index(static_cast<std::ptrdiff_t>(c),
                                                                    static_cast<std::ptrdiff_t>(img.width()))));
  auto coeffs = haar_forward(work, options.levels);

  double t = 0.0;
  if (options.threshold) {
    t = *options.threshold;
  } else {
    std::vector<double> diag;
    diag.reserve(H * W / 4);
    for (std::size_t r = H / 2; r < H; ++r)
      for (std::size_t c = W / 2; c < W; ++c) diag.push_back(std::abs(coeffs.at(r, c)));
    const double sigma = median_of(diag) / 0.6745;
    t = sigma * std::sqrt(2.0 * std::log(static_cast<double>(H * W)));
  }

  const std::size_t lh = H >> options.levels, lw = W >> options.levels;
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      if (r < lh && c < lw) continue;
      double& v = coeffs.at(r, c);
      if (options.mode == ThresholdMode::Soft)
        v = std::copysign(std::max(0.0, std::abs(v) - t), v);
      else if (std::abs(v) <= t)
        v = 0.0;
    }
  const auto rec = haar_inverse(coeffs, options.levels);
  Image out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < img.width(); ++c) out.at(r, c) = rec.at(r, c);
  return options.clip ? clip01(std::move(out)) : out;
}

Image combined_filter(const Image& img) {
  const auto a = mean_filter(img);
  const auto b = median_filter(img);
  const auto c = gaussian_filter(img);
  Image out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = (a[i] + b[i] + c[i]) / 3.0;
  return out;
}

const std::vector<std::string>& filter_names() {
  static const std::vector<std::string> names{"mean",   "median",  "gaussian", "bilateral",
                                              "wiener", "nlmeans", "wavelet",  "combined"};
  return names;
}

Image apply_named(std::string_view name, const Image& img) {
  using Fn = std::function<Image(const Image&)>;
  static const std::map<std::string, Fn, std::less<>> table{
      {"mean", [](const Image& x) { return mean_filter(x); }},
      {"median", [](const Image& x) { return median_filter(x); }},
      {"gaussian", [](const Image& x) { return gaussian_filter(x); }},
      {"bilateral", [](const Image& x) { return bilateral_filter(x); }},
      {"wiener", [](const Image& x) { return wiener_filter(x); }},
      {"nlmeans", [](const Image& x) { return nl_means(x); }},
      {"wavelet", [](const Image& x) { return wavelet_denoise(x); }},
      {"combined", [](const Image& x) { return combined_filter(x); }},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw FilterError("unknown filter: " + std::string(name));
  return it->second(img);
}

}  // namespace xdn::filters
