#include "xdn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binary.hpp"

namespace xdn::io {
namespace {

// Plain-data result of the libpng reader. The reader itself only holds
// trivially destructible locals because libpng reports errors via longjmp.
struct RawPng {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  int channels = 0;
  unsigned char* data = nullptr;  // malloc'd, rows packed
  png_bytep* rows = nullptr;
  char error[256] = {0};
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* raw = static_cast<RawPng*>(png_get_error_ptr(png));
  std::snprintf(raw->error, sizeof(raw->error), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool read_png_raw(const char* path, RawPng* raw) {
  FILE* fp = std::fopen(path, "rb");
  if (!fp) {
    std::snprintf(raw->error, sizeof(raw->error), "cannot open file");
    return false;
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, raw, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, nullptr, nullptr);
    std::fclose(fp);
    std::snprintf(raw->error, sizeof(raw->error), "libpng initialisation failed");
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    std::free(raw->rows);
    std::free(raw->data);
    raw->rows = nullptr;
    raw->data = nullptr;
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  raw->width = png_get_image_width(png, info);
  raw->height = png_get_image_height(png, info);
  raw->bit_depth = png_get_bit_depth(png, info);
  raw->color_type = png_get_color_type(png, info);
  const bool supported_depth = raw->bit_depth == 8 || raw->bit_depth == 16;
  const bool supported_color = raw->color_type == PNG_COLOR_TYPE_GRAY || raw->color_type == PNG_COLOR_TYPE_GRAY_ALPHA ||
                               raw->color_type == PNG_COLOR_TYPE_RGB || raw->color_type == PNG_COLOR_TYPE_RGB_ALPHA;
  if (!supported_depth || !supported_color) {
    const char* kind = raw->color_type == PNG_COLOR_TYPE_PALETTE ? "palette" : "grayscale";
    std::snprintf(raw->error, sizeof(raw->error), "unsupported PNG format: %d-bit %s", raw->bit_depth, kind);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return false;
  }
  if (raw->bit_depth == 16) png_set_swap(png);  // native little-endian 16-bit samples
  png_read_update_info(png, info);
  raw->channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw->data = static_cast<unsigned char*>(std::malloc(rowbytes * raw->height));
  raw->rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * raw->height));
  if (!raw->data || !raw->rows) png_error(png, "out of memory");
  for (png_uint_32 r = 0; r < raw->height; ++r) raw->rows[r] = raw->data + r * rowbytes;
  png_read_image(png, raw->rows);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::free(raw->rows);
  raw->rows = nullptr;
  std::fclose(fp);
  return true;
}

bool write_png_raw(const char* path, const unsigned char* data, png_uint_32 width, png_uint_32 height, int bit_depth,
                   char* error, std::size_t error_len) {
  FILE* fp = std::fopen(path, "wb");
  if (!fp) {
    std::snprintf(error, error_len, "cannot open file for writing");
    return false;
  }
  RawPng ctx;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, nullptr);
    std::fclose(fp);
    std::snprintf(error, error_len, "libpng initialisation failed");
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::snprintf(error, error_len, "%s", ctx.error);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * (bit_depth / 8);
  for (png_uint_32 r = 0; r < height; ++r) png_write_row(png, data + r * rowbytes);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  return true;
}

double sample_value(const unsigned char* p, int bit_depth) {
  if (bit_depth == 8) return *p / 255.0;
  std::uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v / 65535.0;
}

Image load_png(const std::filesystem::path& path) {
  RawPng raw;
  if (!read_png_raw(path.string().c_str(), &raw)) {
    throw ImageFormatError(path.string() + ": " + raw.error);
  }
  const std::size_t bytes = static_cast<std::size_t>(raw.bit_depth / 8);
  Image img(raw.height, raw.width);
  const unsigned char* d = raw.data;
  const std::size_t stride = bytes * static_cast<std::size_t>(raw.channels);
  const bool color = raw.color_type == PNG_COLOR_TYPE_RGB || raw.color_type == PNG_COLOR_TYPE_RGB_ALPHA;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned char* px = d + i * stride;
    if (color) {
      img[i] = 0.299 * sample_value(px, raw.bit_depth) + 0.587 * sample_value(px + bytes, raw.bit_depth) +
               0.114 * sample_value(px + 2 * bytes, raw.bit_depth);
      img[i] = std::clamp(img[i], 0.0, 1.0);
    } else {
      img[i] = sample_value(px, raw.bit_depth);
    }
  }
  std::free(raw.data);
  return img;
}

void skip_pgm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError(path.string() + ": cannot open file");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw ImageFormatError(path.string() + ": unsupported PNM variant " + magic);
  std::size_t w = 0, h = 0, maxval = 0;
  skip_pgm_space(in);
  in >> w;
  skip_pgm_space(in);
  in >> h;
  skip_pgm_space(in);
  in >> maxval;
  if (!in || w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw ImageFormatError(path.string() + ": malformed PGM header");
  }
  Image img(h, w);
  const double scale = static_cast<double>(maxval);
  if (magic == "P2") {
    for (std::size_t i = 0; i < img.size(); ++i) {
      std::size_t v = 0;
      skip_pgm_space(in);
      if (!(in >> v)) throw ImageFormatError(path.string() + ": truncated PGM data");
      img[i] = std::min(static_cast<double>(v), scale) / scale;
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const bool wide = maxval > 255;
  std::vector<unsigned char> buf(img.size() * (wide ? 2 : 1));
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw ImageFormatError(path.string() + ": truncated PGM data");
  }
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = wide ? static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]) : static_cast<double>(buf[i]);
    img[i] = std::min(v, scale) / scale;
  }
  return img;
}

void check_depth(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::invalid_argument("image bit depth must be 8 or 16, got " + std::to_string(bit_depth));
  }
}

std::uint32_t to_level(double v, int bit_depth) {
  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * maxv));
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ImageFormatError(path.string() + ": cannot open file");
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  const auto got = probe.gcount();
  probe.close();
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return load_pgm(path);
  if (got >= 2 && sig[0] == 'P') {
    throw ImageFormatError(path.string() + ": unsupported format PNM P" + std::string(1, static_cast<char>(sig[1])));
  }
  throw ImageFormatError(path.string() + ": unsupported image format (expected PNG or PGM)");
}

Image quantize(const Image& img, int bit_depth) {
  check_depth(bit_depth);
  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  Image out = img;
  for (double& v : out.pixels()) v = to_level(v, bit_depth) / maxv;
  return out;
}

void save_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  check_depth(bit_depth);
  if (img.empty()) throw std::invalid_argument("save_png: empty image");
  std::vector<unsigned char> buf(img.size() * static_cast<std::size_t>(bit_depth / 8));
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto level = to_level(img[i], bit_depth);
    if (bit_depth == 8) {
      buf[i] = static_cast<unsigned char>(level);
    } else {
      const auto v = static_cast<std::uint16_t>(level);
      std::memcpy(&buf[2 * i], &v, 2);
    }
  }
  char error[256] = {0};
  if (!write_png_raw(path.string().c_str(), buf.data(), static_cast<png_uint_32>(img.width()),
                     static_cast<png_uint_32>(img.height()), bit_depth, error, sizeof(error))) {
    throw std::runtime_error(path.string() + ": " + error);
  }
}

void save_pgm(const Image& img, const std::filesystem::path& path, int bit_depth) {
  check_depth(bit_depth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open file for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << (bit_depth == 8 ? 255 : 65535) << '\n';
  for (double v : img.pixels()) {
    const auto level = to_level(v, bit_depth);
    if (bit_depth == 16) out.put(static_cast<char>(level >> 8));
    out.put(static_cast<char>(level & 0xff));
  }
}

void write_raster(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open file for writing");
  out.write("XSAL", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
  detail::put_u32(out, 0);
  for (double v : img.pixels()) detail::put_f32(out, static_cast<float>(v));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Image read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError(path.string() + ": cannot open file");
  char magic[4] = {0};
  std::uint32_t h = 0, w = 0, reserved = 0;
  if (!in.read(magic, 4) || std::string(magic, 4) != "XSAL" || !detail::get_u32(in, h) || !detail::get_u32(in, w) ||
      !detail::get_u32(in, reserved)) {
    throw ImageFormatError(path.string() + ": not an XSAL raster");
  }
  Image img(h, w);
  for (double& v : img.pixels()) {
    float f = 0.0f;
    if (!detail::get_f32(in, f)) throw ImageFormatError(path.string() + ": truncated XSAL raster");
    v = f;
  }
  return img;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a readable directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace xdn::io
