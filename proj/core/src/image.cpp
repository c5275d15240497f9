#include "xdn/image.hpp"

#include <algorithm>
#include <string>

namespace xdn {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), pixels_(height * width, fill) {}

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != height * width) {
    throw ShapeError("image: " + std::to_string(pixels_.size()) + " pixels for " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

Tensor Image::to_tensor() const { return Tensor({1, 1, height_, width_}, pixels_); }

Image Image::from_tensor(const Tensor& t, std::size_t index) {
  require_rank4(t, "Image::from_tensor");
  if (index >= t.batch()) throw ShapeError("Image::from_tensor: batch index out of range");
  const std::size_t h = t.height(), w = t.width();
  const auto first = t.data().begin() + static_cast<std::ptrdiff_t>(index * t.channels() * h * w);
  return Image(h, w, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(h * w)));
}

Tensor stack_images(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const std::size_t h = images[0].height(), w = images[0].width();
  Tensor out({images.size(), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) throw ShapeError("stack_images: mixed image sizes");
    std::copy(images[i].pixels().begin(), images[i].pixels().end(), out.data().begin() + i * h * w);
  }
  return out;
}

Image clip01(Image img) {
  for (double& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace xdn
