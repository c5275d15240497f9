#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <png.h>

#include "support.hpp"
#include "xdn/dataset.hpp"
#include "xdn/image_io.hpp"

using namespace xdn;
using testing_support::TempDir;
using testing_support::uniform_image;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_rgb_png(const std::filesystem::path& path, unsigned char r, unsigned char g, unsigned char b) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = 2;
  img.height = 2;
  img.format = PNG_FORMAT_RGB;
  const unsigned char px[12] = {r, g, b, r, g, b, r, g, b, r, g, b};
  ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, px, 0, nullptr));
}

}  // namespace

TEST(ImageIo, BlackAndWhiteExtremes) {
  TempDir tmp("io");
  io::save_png(Image(4, 5, 0.0), tmp / "black.png");
  const auto black = io::load_image(tmp / "black.png");
  for (double v : black.pixels()) EXPECT_EQ(v, 0.0);
  io::save_png(Image(4, 5, 1.0), tmp / "white16.png", 16);
  const auto w = io::load_image(tmp / "white16.png");
  EXPECT_EQ(w.height(), 4u);
  EXPECT_EQ(w.width(), 5u);
  for (double v : w.pixels()) EXPECT_EQ(v, 1.0);
}

TEST(ImageIo, RoundTripsWithinQuantisation) {
  TempDir tmp("io");
  const auto img = uniform_image(13, 7, 3);
  for (int depth : {8, 16}) {
    const double step = depth == 8 ? 1.0 / 255 : 1.0 / 65535;
    for (const char* ext : {".png", ".pgm"}) {
      const auto path = tmp / ("x" + std::to_string(depth) + ext);
      if (std::string(ext) == ".png")
        io::save_png(img, path, depth);
      else
        io::save_pgm(img, path, depth);
      const auto back = io::load_image(path);
      EXPECT_EQ(back, io::quantize(img, depth)) << path;
      for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back[i] - img[i]), step / 2 + 1e-12);
      // A second save/load cycle is lossless.
      io::save_png(back, tmp / "again.png", depth);
      EXPECT_EQ(io::load_image(tmp / "again.png"), back);
    }
  }
}

TEST(ImageIo, RgbUsesLumaWeights) {
  TempDir tmp("io");
  write_rgb_png(tmp / "rgb.png", 255, 0, 0);
  EXPECT_NEAR(io::load_image(tmp / "rgb.png")[0], 0.299, 1e-12);
  write_rgb_png(tmp / "rgb2.png", 0, 255, 255);
  EXPECT_NEAR(io::load_image(tmp / "rgb2.png")[0], 0.701, 1e-12);
}

TEST(ImageIo, AsciiPgmAndErrors) {
  TempDir tmp("io");
  {
    std::ofstream os(tmp / "a.pgm");
    os << "P2\n# comment\n3 1\n255\n0 51 255\n";
  }
  const auto a = io::load_image(tmp / "a.pgm");
  EXPECT_EQ(std::vector<double>(a.pixels().begin(), a.pixels().end()), (std::vector<double>{0.0, 0.2, 1.0}));
  {
    std::ofstream os(tmp / "bad.pgm");
    os << "P6\n1 1\n255\nabc";
  }
  EXPECT_THROW(io::load_image(tmp / "bad.pgm"), io::ImageFormatError);
  {
    std::ofstream os(tmp / "trunc.pgm", std::ios::binary);
    os << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(io::load_image(tmp / "trunc.pgm"), io::ImageFormatError);
  {
    std::ofstream os(tmp / "x.bmp");
    os << "BM";
  }
  EXPECT_THROW(io::load_image(tmp / "x.bmp"), io::ImageFormatError);
  EXPECT_THROW(io::load_image(tmp / "missing.png"), io::ImageFormatError);
  EXPECT_THROW(io::save_png(Image(2, 2), tmp / "x.png", 12), std::invalid_argument);
}

TEST(ImageIo, ClampsOnWrite) {
  TempDir tmp("io");
  io::save_png(Image(1, 2, std::vector<double>{-0.5, 1.5}), tmp / "c.png");
  const auto c = io::load_image(tmp / "c.png");
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 1.0);
}

TEST(ImageIo, RasterRoundTripAndHeader) {
  TempDir tmp("io");
  Image img = uniform_image(5, 3, 4);
  for (double& v : img.pixels()) v = static_cast<float>(v - 0.5);
  io::write_raster(img, tmp / "m.bin");
  EXPECT_EQ(io::read_raster(tmp / "m.bin"), img);
  const auto bytes = slurp(tmp / "m.bin");
  EXPECT_EQ(bytes.substr(0, 4), "XSAL");
  EXPECT_EQ(bytes.size(), 16u + 15u * 4u);
  std::ofstream(tmp / "short.bin", std::ios::binary) << bytes.substr(0, 20);
  EXPECT_THROW(io::read_raster(tmp / "short.bin"), io::ImageFormatError);
}

TEST(ImageIo, ListImagesSortedAndFiltered) {
  TempDir tmp("io");
  io::save_png(Image(2, 2), tmp / "b.png");
  io::save_pgm(Image(2, 2), tmp / "a.pgm");
  std::ofstream(tmp / "notes.txt") << "x";
  const auto list = io::list_images(tmp.path());
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].filename(), "a.pgm");
  EXPECT_EQ(list[1].filename(), "b.png");
}

TEST(Resize, IdentityConstantAndHandWeights) {
  const auto img = uniform_image(32, 16, 5);
  EXPECT_EQ(data::resize_bilinear(img, 32, 16), img);
  const auto flat = data::resize_bilinear(Image(20, 30, 0.4), 48, 16);
  for (double v : flat.pixels()) EXPECT_NEAR(v, 0.4, 1e-15);
  // Half-pixel centres: output (i, j) samples source (2i + 0.5, 2j + 0.5), the mean of a 2x2 block.
  const Image x(4, 4, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  const auto y = data::resize_bilinear(x, 2, 2, 1);
  EXPECT_EQ(std::vector<double>(y.pixels().begin(), y.pixels().end()), (std::vector<double>{2.5, 4.5, 10.5, 12.5}));
  EXPECT_THROW(data::resize_bilinear(img, 30, 16), data::DatasetError);
}

TEST(Dataset, SplitIsDeterministicDisjointAndSeedDependent) {
  data::DatasetManifest m;
  for (int i = 0; i < 120; ++i) m.entries.push_back({"img" + std::to_string(1000 + i) + ".png", data::Split::Unassigned, 8, 8});
  auto reversed = m;
  std::reverse(reversed.entries.begin(), reversed.entries.end());
  const auto a = data::split_dataset(m, 80, 30, 5);
  const auto b = data::split_dataset(reversed, 80, 30, 5);
  const auto c = data::split_dataset(m, 80, 30, 6);
  auto paths = [](const std::vector<data::DatasetEntry>& es) {
    std::vector<std::string> p;
    for (const auto& e : es) p.push_back(e.path);
    return p;
  };
  EXPECT_EQ(paths(a.select(data::Split::Train)), paths(b.select(data::Split::Train)));
  EXPECT_EQ(paths(a.select(data::Split::Test)), paths(b.select(data::Split::Test)));
  EXPECT_NE(paths(a.select(data::Split::Train)), paths(c.select(data::Split::Train)));
  const auto train = paths(a.select(data::Split::Train));
  const auto test = paths(a.select(data::Split::Test));
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 30u);
  std::set<std::string> all(train.begin(), train.end());
  for (const auto& t : test) EXPECT_FALSE(all.count(t));
  EXPECT_THROW(data::split_dataset(m, 100, 30, 5), data::DatasetError);
}

TEST(Dataset, ManifestRoundTripAndLoading) {
  TempDir tmp("ds");
  const auto m = data::generate_phantoms(tmp / "ph", 6, 32, 3);
  ASSERT_EQ(m.entries.size(), 6u);
  const auto scanned = data::scan_directory(tmp / "ph");
  EXPECT_EQ(scanned.entries.size(), 6u);
  auto split = data::split_dataset(scanned, 4, 2, 1);
  split.target_height = split.target_width = 16;
  split.write_jsonl(tmp / "split.jsonl");
  const auto back = data::DatasetManifest::read_jsonl(tmp / "split.jsonl");
  EXPECT_EQ(back.target_height, 16u);
  ASSERT_EQ(back.entries.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.entries[i].path, split.entries[i].path);
    EXPECT_EQ(back.entries[i].split, split.entries[i].split);
  }
  const auto train = data::load_split(back, data::Split::Train);
  ASSERT_EQ(train.size(), 4u);
  EXPECT_EQ(train[0].height(), 16u);
  EXPECT_EQ(data::parse_split(data::split_name(data::Split::Test)), data::Split::Test);
  EXPECT_THROW(data::parse_split("validation"), data::DatasetError);
}

TEST(Phantoms, DeterministicBoundedAndNonDegenerate) {
  for (std::size_t i = 0; i < 200; ++i) {
    const auto p = data::generate_phantom(64, 11, i);
    double mn = 1, mx = 0, s = 0, s2 = 0;
    for (double v : p.pixels()) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      s += v;
      s2 += v * v;
    }
    ASSERT_GE(mn, 0.0);
    ASSERT_LE(mx, 1.0);
    ASSERT_GT(s2 / 4096 - (s / 4096) * (s / 4096), 1e-4) << i;
  }
  EXPECT_EQ(data::generate_phantom(64, 11, 3), data::generate_phantom(64, 11, 3));
  EXPECT_NE(data::generate_phantom(64, 11, 3), data::generate_phantom(64, 12, 3));
}

TEST(Phantoms, DirectoryOutputIsByteIdentical) {
  TempDir tmp("ph");
  data::generate_phantoms(tmp / "a", 4, 32, 9);
  data::generate_phantoms(tmp / "b", 4, 32, 9, 3);
  for (const auto& p : io::list_images(tmp / "a")) EXPECT_EQ(slurp(p), slurp(tmp.path() / "b" / p.filename()));
  const auto empty = data::generate_phantoms(tmp / "none", 0, 32, 9);
  EXPECT_TRUE(empty.entries.empty());
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "none" / "manifest.jsonl"));
  EXPECT_EQ(data::phantom_set(2, 32, 9)[1], io::load_image(tmp.path() / "a" / "phantom_00001.png"));
}
