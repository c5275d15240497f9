#pragma once

// Seeded corruption models for medical images.
//
// Every model returns the corrupted image together with the exact additive
// mask, so that noisy == clean + mask holds bit-for-bit. To make that
// subtraction exact in floating point, both the clean input and the noisy
// output are snapped to a 2^-24 lattice (far below 16-bit quantisation).

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xdn/image.hpp"

namespace xdn::noise {

enum class NoiseKind {
  Gaussian,
  Poisson,
  Speckle,
  NoncentralChi,
  Rician,
  SaltPepper,
  Structured,
  Thermal,
  MagField,
  ChemShift,
  Motion,
  WrapAround,
  Susceptibility,
};

inline constexpr std::array<NoiseKind, 13> kAllKinds = {
    NoiseKind::Gaussian,   NoiseKind::Poisson,  NoiseKind::Speckle,   NoiseKind::NoncentralChi, NoiseKind::Rician,
    NoiseKind::SaltPepper, NoiseKind::Structured, NoiseKind::Thermal, NoiseKind::MagField,      NoiseKind::ChemShift,
    NoiseKind::Motion,     NoiseKind::WrapAround, NoiseKind::Susceptibility,
};

class NoiseSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string_view kind_name(NoiseKind kind);
NoiseKind parse_kind(std::string_view name);
std::size_t kind_index(NoiseKind kind);
/// Comma-separated list; "all" expands to every kind.
std::vector<NoiseKind> parse_kind_list(std::string_view list);

using Params = std::map<std::string, double>;

Params default_params(NoiseKind kind);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  Params params;
  std::uint64_t seed = 0;

  /// Defaults for `kind`, overridden by `overrides`; validated.
  static NoiseSpec make(NoiseKind kind, std::uint64_t seed, const Params& overrides = {});
  void validate() const;
  double param(const std::string& key) const;
};

struct NoisePair {
  Image noisy;
  Image mask;   // noisy - clean, exact
  Image clean;  // the lattice-snapped clean image the mask refers to
};

inline constexpr double kPixelQuantum = 0x1p-24;
double snap_to_lattice(double v);
Image snap_to_lattice(Image img);

NoisePair apply_noise(const Image& clean, const NoiseSpec& spec);

// Suite packaging ----------------------------------------------------------------

struct SuiteEntry {
  std::string clean_path;
  std::string noisy_path;
  std::string mask_path;
  NoiseKind kind;
  Params params;
  std::uint64_t seed;
};

/// Per-image stream seed: independent across images and kinds.
std::uint64_t suite_seed(std::uint64_t master_seed, std::size_t image_index, NoiseKind kind);

/// Corrupts every image of `clean_dir` with every kind in `kinds` and writes
/// 16-bit PNG clean/noisy images, float32 masks, and manifest.jsonl into `out_dir`.
std::vector<SuiteEntry> noise_suite(const std::filesystem::path& clean_dir, const std::vector<NoiseKind>& kinds,
                                    std::uint64_t master_seed, const std::filesystem::path& out_dir,
                                    const std::map<NoiseKind, Params>& overrides = {}, std::size_t jobs = 1);

std::vector<SuiteEntry> read_suite_manifest(const std::filesystem::path& manifest);

/// Reloads each triplet and checks |noisy - mask - clean| <= tol everywhere.
bool verify_suite(const std::vector<SuiteEntry>& entries, double tol = 1e-6);

}  // namespace xdn::noise
