#include "xdn/noise.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"
#include "xdn/image_io.hpp"
#include "xdn/parallel.hpp"
#include "xdn/rng.hpp"

namespace xdn::noise {
namespace {

constexpr std::array<std::string_view, 13> kNames = {
    "gaussian",   "poisson",    "speckle",   "noncentral-chi", "rician", "salt-pepper",   "structured",
    "thermal",    "mag-field",  "chem-shift", "motion",        "wrap-around", "susceptibility",
};

using Rng = std::mt19937_64;

// Bilinear sample at fractional (r, c); outside samples are clamped or zero.
double sample(const Image& img, double r, double c, bool zero_outside) {
  const auto h = static_cast<double>(img.height()), w = static_cast<double>(img.width());
  if (zero_outside && (r < 0.0 || c < 0.0 || r > h - 1.0 || c > w - 1.0)) {
    // Partial coverage near the border: interpolate against zero.
    const double r0 = std::floor(r), c0 = std::floor(c);
    double acc = 0.0;
    for (int dr = 0; dr < 2; ++dr) {
      for (int dc = 0; dc < 2; ++dc) {
        const double rr = r0 + dr, cc = c0 + dc;
        if (rr < 0 || cc < 0 || rr > h - 1 || cc > w - 1) continue;
        const double wr = dr ? r - r0 : 1.0 - (r - r0);
        const double wc = dc ? c - c0 : 1.0 - (c - c0);
        acc += wr * wc * img.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
      }
    }
    return acc;
  }
  r = std::clamp(r, 0.0, h - 1.0);
  c = std::clamp(c, 0.0, w - 1.0);
  const auto r0 = static_cast<std::size_t>(r), c0 = static_cast<std::size_t>(c);
  const std::size_t r1 = std::min(r0 + 1, img.height() - 1), c1 = std::min(c0 + 1, img.width() - 1);
  const double fr = r - static_cast<double>(r0), fc = c - static_cast<double>(c0);
  return (1 - fr) * ((1 - fc) * img.at(r0, c0) + fc * img.at(r0, c1)) +
         fr * ((1 - fc) * img.at(r1, c0) + fc * img.at(r1, c1));
}

Image additive_gaussian(const Image& x, double sigma, Rng& rng) {
  Image y = x;
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : y.pixels()) v += sigma * n(rng);
  return y;
}

Image poisson(const Image& x, double peak, Rng& rng) {
  Image y = x;
  for (double& v : y.pixels()) {
    const double mean = std::max(v, 0.0) * peak;
    if (mean <= 0.0) {
      v = 0.0;
      continue;
    }
    std::poisson_distribution<long long> p(mean);
    v = static_cast<double>(p(rng)) / peak;
  }
  return y;
}

Image speckle(const Image& x, double sigma, Rng& rng) {
  Image y = x;
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : y.pixels()) v *= 1.0 + sigma * n(rng);
  return y;
}

// Magnitude of one signal-bearing channel plus (channels - 1) pure-noise channels.
Image magnitude_noise(const Image& x, double sigma, std::size_t channels, Rng& rng) {
  Image y = x;
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : y.pixels()) {
    const double re = v + sigma * n(rng);
    double acc = re * re;
    for (std::size_t i = 1; i < channels; ++i) {
      const double e = sigma * n(rng);
      acc += e * e;
    }
    v = std::sqrt(acc);
  }
  return y;
}

Image salt_pepper(const Image& x, double p, Rng& rng) {
  Image y = x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : y.pixels()) {
    const double draw = u(rng);
    if (draw < 0.5 * p) {
      v = 0.0;
    } else if (draw < p) {
      v = 1.0;
    }
  }
  return y;
}

Image structured(const Image& x, double amplitude, double frequency, Rng& rng) {
  std::bernoulli_distribution vertical(0.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const bool along_rows = vertical(rng);
  const double phi = phase(rng);
  Image y = x;
  for (std::size_t r = 0; r < x.height(); ++r) {
    for (std::size_t c = 0; c < x.width(); ++c) {
      const double t = static_cast<double>(along_rows ? r : c);
      y.at(r, c) += amplitude * std::sin(2.0 * std::numbers::pi * frequency * t + phi);
    }
  }
  return y;
}

Image mag_field(const Image& x, double beta, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::array<double, 6> k{};
  for (double& v : k) v = n(rng);
  const std::size_t h = x.height(), w = x.width();
  Image field(h, w);
  double peak = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    const double v = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(h) - 1.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double u = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(w) - 1.0;
      const double p = k[0] + k[1] * u + k[2] * v + k[3] * u * u + k[4] * u * v + k[5] * v * v;
      field.at(r, c) = p;
      peak = std::max(peak, std::abs(p));
    }
  }
  Image y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = peak > 0.0 ? field[i] / peak : 0.0;
    y[i] *= 1.0 + beta * p;
  }
  return y;
}

Image chem_shift(const Image& x, double shift, double alpha, Rng& rng) {
  std::bernoulli_distribution vertical(0.5);
  const bool along_rows = vertical(rng);
  Image y = x;
  for (std::size_t r = 0; r < x.height(); ++r) {
    for (std::size_t c = 0; c < x.width(); ++c) {
      const double sr = static_cast<double>(r) - (along_rows ? shift : 0.0);
      const double sc = static_cast<double>(c) - (along_rows ? 0.0 : shift);
      y.at(r, c) = (1.0 - alpha) * x.at(r, c) + alpha * sample(x, sr, sc, true);
    }
  }
  return y;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Synthetic k-space: a random subset of phase-encode lines (rows of the 2-D
// spectrum) picks up a random global phase.
Image motion(const Image& x, double fraction, double max_phase, Rng& rng) {
  const std::size_t h = x.height(), w = x.width();
  const std::size_t n = h * w;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = x[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(fwd);

  std::vector<std::size_t> lines(h);
  for (std::size_t i = 0; i < h; ++i) lines[i] = i;
  std::shuffle(lines.begin(), lines.end(), rng);
  const auto corrupted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(h)));
  std::uniform_real_distribution<double> delta(-max_phase, max_phase);
  for (std::size_t j = 0; j < corrupted; ++j) {
    const std::complex<double> rot = std::polar(1.0, 2.0 * std::numbers::pi * delta(rng));
    for (std::size_t c = 0; c < w; ++c) {
      auto& z = buf[lines[j] * w + c];
      const std::complex<double> v = std::complex<double>(z[0], z[1]) * rot;
      z[0] = v.real();
      z[1] = v.imag();
    }
  }
  fftw_execute(inv);
  Image y(h, w);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::hypot(buf[i][0], buf[i][1]) / static_cast<double>(n);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  return y;
}

Image wrap_around(const Image& x, double alpha) {
  const std::size_t h = x.height(), w = x.width();
  Image y = x;
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t src = (r + h / 2) % h;
    for (std::size_t c = 0; c < w; ++c) y.at(r, c) = (1.0 - alpha) * x.at(r, c) + alpha * x.at(src, c);
  }
  return y;
}

Image susceptibility(const Image& x, double shift, double dropout, double width, Rng& rng) {
  const std::size_t h = x.height(), w = x.width();
  std::uniform_real_distribution<double> ur(0.0, static_cast<double>(h));
  std::uniform_real_distribution<double> uc(0.0, static_cast<double>(w));
  const double cr = ur(rng), cc = uc(rng);
  const double tau = width * static_cast<double>(w);
  Image y(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
      const double d2 = dr * dr + dc * dc;
      const double g = std::exp(-d2 / (2.0 * tau * tau));
      double sr = static_cast<double>(r), sc = static_cast<double>(c);
      if (d2 > 0.0) {
        const double d = std::sqrt(d2);
        sr += shift * g * dr / d;
        sc += shift * g * dc / d;
      }
      y.at(r, c) = sample(x, sr, sc, false) * (1.0 - dropout * g);
    }
  }
  return y;
}

void require(bool ok, NoiseKind kind, const std::string& what) {
  if (!ok) throw NoiseSpecError(std::string(kind_name(kind)) + ": " + what);
}

}  // namespace

std::string_view kind_name(NoiseKind kind) { return kNames[kind_index(kind)]; }

std::size_t kind_index(NoiseKind kind) { return static_cast<std::size_t>(kind); }

NoiseKind parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return kAllKinds[i];
  throw NoiseSpecError("unknown noise kind '" + std::string(name) + "'");
}

std::vector<NoiseKind> parse_kind_list(std::string_view list) {
  if (list == "all") return {kAllKinds.begin(), kAllKinds.end()};
  std::vector<NoiseKind> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto item = list.substr(start, end - start);
    if (!item.empty()) out.push_back(parse_kind(item));
    start = end + 1;
  }
  if (out.empty()) throw NoiseSpecError("empty noise kind list");
  return out;
}

Params default_params(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return {{"sigma", 0.10}};
    case NoiseKind::Thermal: return {{"sigma", 0.05}};
    case NoiseKind::Poisson: return {{"peak", 30.0}};
    case NoiseKind::Speckle: return {{"sigma", 0.15}};
    case NoiseKind::Rician: return {{"sigma", 0.08}};
    case NoiseKind::NoncentralChi: return {{"sigma", 0.06}, {"coils", 4.0}};
    case NoiseKind::SaltPepper: return {{"p", 0.05}};
    case NoiseKind::Structured: return {{"amplitude", 0.08}, {"frequency", 0.12}};
    case NoiseKind::MagField: return {{"beta", 0.3}};
    case NoiseKind::ChemShift: return {{"shift", 3.0}, {"alpha", 0.5}};
    case NoiseKind::Motion: return {{"fraction", 0.3}, {"max_phase", 0.1}};
    case NoiseKind::WrapAround: return {{"alpha", 0.35}};
    case NoiseKind::Susceptibility: return {{"shift", 6.0}, {"dropout", 0.6}, {"width", 0.125}};
  }
  throw NoiseSpecError("unknown noise kind");
}

NoiseSpec NoiseSpec::make(NoiseKind kind, std::uint64_t seed, const Params& overrides) {
  NoiseSpec s{kind, default_params(kind), seed};
  for (const auto& [k, v] : overrides) {
    if (!s.params.contains(k)) throw NoiseSpecError(std::string(kind_name(kind)) + ": unknown parameter '" + k + "'");
    s.params[k] = v;
  }
  s.validate();
  return s;
}

double NoiseSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) throw NoiseSpecError(std::string(kind_name(kind)) + ": missing parameter '" + key + "'");
  return it->second;
}

void NoiseSpec::validate() const {
  const auto defaults = default_params(kind);
  for (const auto& [k, v] : params) {
    require(defaults.contains(k), kind, "unknown parameter '" + k + "'");
    require(std::isfinite(v), kind, "parameter '" + k + "' is not finite");
  }
  for (const auto& [k, v] : defaults) require(params.contains(k), kind, "missing parameter '" + k + "'");
  auto in01 = [&](const char* key) { require(param(key) >= 0.0 && param(key) <= 1.0, kind, std::string(key) + " must lie in [0,1]"); };
  auto nonneg = [&](const char* key) { require(param(key) >= 0.0, kind, std::string(key) + " must be >= 0"); };
  switch (kind) {
    case NoiseKind::Gaussian:
    case NoiseKind::Thermal:
    case NoiseKind::Speckle:
    case NoiseKind::Rician: nonneg("sigma"); break;
    case NoiseKind::NoncentralChi: {
      nonneg("sigma");
      const double coils = param("coils");
      require(coils >= 1.0 && coils <= 64.0 && coils == std::floor(coils), kind, "coils must be an integer in [1,64]");
      break;
    }
    case NoiseKind::Poisson: require(param("peak") > 0.0, kind, "peak must be > 0"); break;
    case NoiseKind::SaltPepper: in01("p"); break;
    case NoiseKind::Structured:
      nonneg("amplitude");
      nonneg("frequency");
      break;
    case NoiseKind::MagField: require(param("beta") >= 0.0 && param("beta") <= 1.0, kind, "beta must lie in [0,1]"); break;
    case NoiseKind::ChemShift:
      nonneg("shift");
      in01("alpha");
      break;
    case NoiseKind::Motion:
      in01("fraction");
      require(param("max_phase") >= 0.0 && param("max_phase") <= 0.5, kind, "max_phase must lie in [0,0.5]");
      break;
    case NoiseKind::WrapAround: in01("alpha"); break;
    case NoiseKind::Susceptibility:
      nonneg("shift");
      in01("dropout");
      require(param("width") > 0.0, kind, "width must be > 0");
      break;
  }
}

double snap_to_lattice(double v) { return std::nearbyint(v / kPixelQuantum) * kPixelQuantum; }

Image snap_to_lattice(Image img) {
  for (double& v : img.pixels()) v = snap_to_lattice(v);
  return img;
}

NoisePair apply_noise(const Image& clean, const NoiseSpec& spec) {
  spec.validate();
  if (clean.empty()) throw std::invalid_argument("apply_noise: empty image");
  for (double v : clean.pixels()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("apply_noise: clean image values must lie in [0,1]");
  }
  Rng rng(derive_seed(spec.seed, {kind_index(spec.kind)}));
  const Image x = snap_to_lattice(clean);
  Image y;
  switch (spec.kind) {
    case NoiseKind::Gaussian:
    case NoiseKind::Thermal: y = additive_gaussian(x, spec.param("sigma"), rng); break;
    case NoiseKind::Poisson: y = poisson(x, spec.param("peak"), rng); break;
    case NoiseKind::Speckle: y = speckle(x, spec.param("sigma"), rng); break;
    case NoiseKind::Rician: y = magnitude_noise(x, spec.param("sigma"), 2, rng); break;
    case NoiseKind::NoncentralChi:
      y = magnitude_noise(x, spec.param("sigma"), 2 * static_cast<std::size_t>(spec.param("coils")), rng);
      break;
    case NoiseKind::SaltPepper: y = salt_pepper(x, spec.param("p"), rng); break;
    case NoiseKind::Structured: y = structured(x, spec.param("amplitude"), spec.param("frequency"), rng); break;
    case NoiseKind::MagField: y = mag_field(x, spec.param("beta"), rng); break;
    case NoiseKind::ChemShift: y = chem_shift(x, spec.param("shift"), spec.param("alpha"), rng); break;
    case NoiseKind::Motion: y = motion(x, spec.param("fraction"), spec.param("max_phase"), rng); break;
    case NoiseKind::WrapAround: y = wrap_around(x, spec.param("alpha")); break;
    case NoiseKind::Susceptibility:
      y = susceptibility(x, spec.param("shift"), spec.param("dropout"), spec.param("width"), rng);
      break;
  }
  NoisePair pair;
  pair.noisy = snap_to_lattice(clip01(std::move(y)));
  pair.mask = Image(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) pair.mask[i] = pair.noisy[i] - x[i];
  pair.clean = x;
  return pair;
}

std::uint64_t suite_seed(std::uint64_t master_seed, std::size_t image_index, NoiseKind kind) {
  return derive_seed(master_seed, {image_index, kind_index(kind)});
}

namespace {

nlohmann::json entry_to_json(const SuiteEntry& e) {
  nlohmann::json j;
  j["clean-path"] = e.clean_path;
  j["noisy-path"] = e.noisy_path;
  j["mask-path"] = e.mask_path;
  j["kind"] = std::string(kind_name(e.kind));
  j["params"] = e.params;
  j["seed"] = e.seed;
  return j;
}

}  // namespace

std::vector<SuiteEntry> noise_suite(const std::filesystem::path& clean_dir, const std::vector<NoiseKind>& kinds,
                                    std::uint64_t master_seed, const std::filesystem::path& out_dir,
                                    const std::map<NoiseKind, Params>& overrides, std::size_t jobs) {
  namespace fs = std::filesystem;
  const auto inputs = io::list_images(clean_dir);
  std::set<std::string> stems;
  for (const auto& p : inputs) {
    if (!stems.insert(p.stem().string()).second) {
      throw std::runtime_error("noise_suite: two inputs share the stem '" + p.stem().string() +
                               "'; output names would collide");
    }
  }
  std::set<NoiseKind> unique_kinds(kinds.begin(), kinds.end());
  if (unique_kinds.size() != kinds.size()) throw std::invalid_argument("noise_suite: duplicate noise kind");
  fs::create_directories(out_dir);

  std::vector<std::vector<SuiteEntry>> per_image(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    const Image loaded = io::load_image(inputs[i]);
    // Stored images are 16-bit; the mask refers to the quantised values that land on disk.
    const Image clean = io::quantize(loaded, 16);
    const std::string stem = inputs[i].stem().string();
    const fs::path clean_path = out_dir / (stem + "__clean.png");
    io::save_png(clean, clean_path, 16);
    for (NoiseKind kind : kinds) {
      const auto it = overrides.find(kind);
      const auto spec = NoiseSpec::make(kind, suite_seed(master_seed, i, kind), it == overrides.end() ? Params{} : it->second);
      const auto pair = apply_noise(clean, spec);
      const Image noisy = io::quantize(pair.noisy, 16);
      Image mask(noisy.height(), noisy.width());
      for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = noisy[p] - clean[p];
      const std::string base = stem + "__" + std::string(kind_name(kind));
      SuiteEntry e{clean_path.string(), (out_dir / (base + "__noisy.png")).string(),
                   (out_dir / (base + "__mask.xsal")).string(), kind, spec.params, spec.seed};
      io::save_png(noisy, e.noisy_path, 16);
      io::write_raster(mask, e.mask_path);
      per_image[i].push_back(std::move(e));
    }
  });

  std::vector<SuiteEntry> entries;
  for (auto& v : per_image)
    for (auto& e : v) entries.push_back(std::move(e));
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("noise_suite: cannot write manifest in " + out_dir.string());
  for (const auto& e : entries) manifest << entry_to_json(e).dump() << '\n';
  return entries;
}

std::vector<SuiteEntry> read_suite_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read manifest " + manifest.string());
  std::vector<SuiteEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back(SuiteEntry{j.at("clean-path"), j.at("noisy-path"), j.at("mask-path"),
                             parse_kind(j.at("kind").get<std::string>()), j.at("params").get<Params>(),
                             j.at("seed").get<std::uint64_t>()});
  }
  return out;
}

bool verify_suite(const std::vector<SuiteEntry>& entries, double tol) {
  for (const auto& e : entries) {
    const Image clean = io::load_image(e.clean_path);
    const Image noisy = io::load_image(e.noisy_path);
    const Image mask = io::read_raster(e.mask_path);
    if (!clean.same_dims(noisy) || !clean.same_dims(mask)) return false;
    for (std::size_t i = 0; i < clean.size(); ++i)
      if (std::abs(noisy[i] - mask[i] - clean[i]) > tol) return false;
  }
  return true;
}

}  // namespace xdn::noise
