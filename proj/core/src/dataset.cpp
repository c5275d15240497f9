#include "xdn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "xdn/image_io.hpp"
#include "xdn/kernels.hpp"
#include "xdn/noise.hpp"
#include "xdn/parallel.hpp"
#include "xdn/rng.hpp"

namespace xdn::data {

namespace fs = std::filesystem;
using nlohmann::json;

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width, std::size_t multiple) {
  if (img.empty()) throw DatasetError("cannot resize an empty image");
  if (height == 0 || width == 0) throw DatasetError("resize target must be non-zero");
  if (multiple == 0 || height % multiple != 0 || width % multiple != 0)
    throw DatasetError("resize target " + std::to_string(height) + "x" + std::to_string(width) +
                       " is not divisible by " + std::to_string(multiple));
  if (img.height() == height && img.width() == width) return img;
  const auto out = kernels::bilinear_resample(img.to_tensor(), height, width);
  return Image::from_tensor(out);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "none";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "none") return Split::Unassigned;
  throw DatasetError("unknown split tag: " + s);
}

std::vector<DatasetEntry> DatasetManifest::select(Split s) const {
  std::vector<DatasetEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

void DatasetManifest::write_jsonl(const fs::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    json j{{"path", e.path},
           {"split", split_name(e.split)},
           {"height", e.height},
           {"width", e.width},
           {"target", {target_height, target_width}}};
    os << j.dump() << '\n';
  }
  if (!os) throw DatasetError("failed writing manifest " + path.string());
}

DatasetManifest DatasetManifest::read_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      DatasetEntry e;
      e.path = j.at("path").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      e.height = j.at("height").get<std::size_t>();
      e.width = j.at("width").get<std::size_t>();
      const auto& t = j.at("target");
      m.target_height = t.at(0).get<std::size_t>();
      m.target_width = t.at(1).get<std::size_t>();
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

DatasetManifest scan_directory(const fs::path& dir) {
  DatasetManifest m;
  for (const auto& p : io::list_images(dir)) {
    const auto img = io::load_image(p);
    m.entries.push_back({p.string(), Split::Unassigned, img.height(), img.width()});
  }
  return m;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, std::size_t train_n, std::size_t test_n,
                              std::uint64_t seed) {
  if (train_n + test_n > manifest.entries.size())
    throw DatasetError("split needs " + std::to_string(train_n + test_n) + " images but only " +
                       std::to_string(manifest.entries.size()) + " are available");
  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  const auto order = shuffled_indices(entries.size(), derive_seed(seed, {0x73706c6974}));
  DatasetManifest out;
  out.target_height = manifest.target_height;
  out.target_width = manifest.target_width;
  for (std::size_t i = 0; i < train_n + test_n; ++i) {
    auto e = entries[order[i]];
    e.split = i < train_n ? Split::Train : Split::Test;
    out.entries.push_back(std::move(e));
  }
  return out;
}

Image load_entry(const DatasetManifest& manifest, const DatasetEntry& entry) {
  auto img = io::load_image(entry.path);
  if (manifest.target_height == 0) return img;
  return clip01(resize_bilinear(img, manifest.target_height, manifest.target_width));
}

std::vector<Image> load_split(const DatasetManifest& manifest, Split s) {
  std::vector<Image> out;
  for (const auto& e : manifest.select(s)) out.push_back(load_entry(manifest, e));
  return out;
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Image generate_phantom(std::size_t size, std::uint64_t seed, std::size_t index) {
  if (size == 0 || size % 16 != 0) throw DatasetError("phantom size must be a positive multiple of 16");
  std::mt19937_64 rng(derive_seed(seed, {0x7068616e, index}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double n = static_cast<double>(size);

  Image img(size, size, uni(0.02, 0.08));

  struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t, value;
  };
  const int n_ellipses = 2 + static_cast<int>(u(rng) * 4.0);
  std::vector<Ellipse> ellipses;
  for (int e = 0; e < n_ellipses; ++e) {
    const double theta = uni(0.0, std::numbers::pi);
    // The first ellipse is a large body outline, the rest are structures inside it.
    const double scale = e == 0 ? uni(0.30, 0.42) : uni(0.06, 0.20);
    const double centre_spread = e == 0 ? 0.05 : 0.18;
    ellipses.push_back({n * uni(0.5 - centre_spread, 0.5 + centre_spread), n * uni(0.5 - centre_spread, 0.5 + centre_spread),
                        n * scale, n * scale * uni(0.5, 1.0), std::cos(theta), std::sin(theta),
                        e == 0 ? uni(0.25, 0.45) : uni(0.45, 0.80)});
  }
  // 2x2 supersampling softens the ellipse boundaries.
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double y = static_cast<double>(r) + 0.25 + 0.5 * sy;
          const double x = static_cast<double>(c) + 0.25 + 0.5 * sx;
          double v = img.at(r, c);
          for (const auto& el : ellipses) {
            const double dx = x - el.cx, dy = y - el.cy;
            const double xr = dx * el.cos_t + dy * el.sin_t;
            const double yr = -dx * el.sin_t + dy * el.cos_t;
            if ((xr * xr) / (el.a * el.a) + (yr * yr) / (el.b * el.b) <= 1.0) v = el.value;
          }
          acc += v;
        }
      img.at(r, c) = acc / 4.0;
    }

  const int n_lines = 1 + static_cast<int>(u(rng) * 3.0);
  for (int l = 0; l < n_lines; ++l) {
    const double ax = n * uni(0.15, 0.85), ay = n * uni(0.15, 0.85);
    const double bx = n * uni(0.15, 0.85), by = n * uni(0.15, 0.85);
    const double value = uni(0.85, 1.0);
    const double half_width = uni(0.5, 0.9);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double d = segment_distance(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5, ax, ay, bx, by);
        const double cover = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        if (cover > 0.0) img.at(r, c) = std::max(img.at(r, c), (1.0 - cover) * img.at(r, c) + cover * value);
      }
  }

  const double gx = uni(-0.08, 0.08), gy = uni(-0.08, 0.08);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double x = 2.0 * (static_cast<double>(c) + 0.5) / n - 1.0;
      const double y = 2.0 * (static_cast<double>(r) + 0.5) / n - 1.0;
      img.at(r, c) *= 1.0 + gx * x + gy * y;
    }
  return noise::snap_to_lattice(clip01(std::move(img)));
}

std::vector<Image> phantom_set(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(io::quantize(generate_phantom(size, seed, i), 16));
  return out;
}

DatasetManifest generate_phantoms(const fs::path& out_dir, std::size_t count, std::size_t size, std::uint64_t seed,
                                  std::size_t jobs) {
  fs::create_directories(out_dir);
  DatasetManifest m;
  m.entries.resize(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%05zu.png", i);
    const auto path = out_dir / name;
    io::save_png(generate_phantom(size, seed, i), path, 16);
    m.entries[i] = {path.string(), Split::Unassigned, size, size};
  });
  m.write_jsonl(out_dir / "manifest.jsonl");
  return m;
}

}  // namespace xdn::data
