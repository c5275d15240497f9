#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "xdn/image.hpp"

namespace xdn::io {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8/16-bit grayscale PNG or PGM (P2/P5), scaled to [0,1]. RGB(A) PNG is
/// reduced with luma weights (0.299, 0.587, 0.114); alpha is ignored.
Image load_image(const std::filesystem::path& path);

/// Values are clamped to [0,1] and rounded to the requested depth (8 or 16).
void save_png(const Image& img, const std::filesystem::path& path, int bit_depth = 8);
void save_pgm(const Image& img, const std::filesystem::path& path, int bit_depth = 8);

/// Same rounding as the writers, without touching disk.
Image quantize(const Image& img, int bit_depth);

/// Raw float raster: "XSAL", u32 height, u32 width, u32 reserved, then
/// height*width little-endian float32 values.
void write_raster(const Image& img, const std::filesystem::path& path);
Image read_raster(const std::filesystem::path& path);

/// Regular files with a .png or .pgm extension, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace xdn::io
