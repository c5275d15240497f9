#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "xdn/image.hpp"
#include "xdn/rng.hpp"
#include "xdn/tensor.hpp"

namespace testing_support {

/// Same stream as uniform() in tests/oracles/reference_values.py.
inline std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * (static_cast<double>(xdn::splitmix64(seed + i) >> 11) * 0x1p-53);
  return v;
}

inline xdn::Tensor uniform_tensor(const xdn::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return xdn::Tensor(shape, uniform(xdn::shape_numel(shape), seed, lo, hi));
}

inline xdn::Image uniform_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  return xdn::Image(h, w, uniform(h * w, seed));
}

/// max |a-b| / max(|a|, |b|, floor)
inline double max_rel_error(const xdn::Tensor& a, const xdn::Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("xdn_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
