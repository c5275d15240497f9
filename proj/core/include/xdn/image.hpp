#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xdn/tensor.hpp"

namespace xdn {

/// Single-channel raster, row-major, nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0);
  Image(std::size_t height, std::size_t width, std::vector<double> pixels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double& at(std::size_t r, std::size_t c) { return pixels_[r * width_ + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels_[r * width_ + c]; }
  double& operator[](std::size_t i) { return pixels_[i]; }
  double operator[](std::size_t i) const { return pixels_[i]; }

  std::span<double> pixels() & { return pixels_; }
  std::span<const double> pixels() const& { return pixels_; }
  std::span<const double> pixels() const&& = delete;

  bool same_dims(const Image& o) const { return height_ == o.height_ && width_ == o.width_; }

  /// (1, 1, H, W)
  Tensor to_tensor() const;
  /// Extracts channel 0 of batch entry `index` from a (B, C, H, W) tensor.
  static Image from_tensor(const Tensor& t, std::size_t index = 0);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> pixels_;
};

/// Stacks equally sized images into a (B, 1, H, W) tensor.
Tensor stack_images(std::span<const Image> images);

Image clip01(Image img);

}  // namespace xdn
