#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdn/image.hpp"

namespace xdn::data {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bilinear resampling (half-pixel centres, edge clamp). Returns an exact copy
/// when the size already matches. Target extents must be multiples of
/// `multiple` (16 keeps four U-Net poolings exact).
Image resize_bilinear(const Image& img, std::size_t height = 256, std::size_t width = 256,
                      std::size_t multiple = 16);

enum class Split { Unassigned, Train, Test };
std::string split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetEntry {
  std::string path;
  Split split = Split::Unassigned;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
  std::size_t target_height = 0;  // 0 means no resize
  std::size_t target_width = 0;

  std::vector<DatasetEntry> select(Split s) const;
  void write_jsonl(const std::filesystem::path& path) const;
  static DatasetManifest read_jsonl(const std::filesystem::path& path);
};

/// Every .png/.pgm under `dir`, sorted by path, with original dims.
DatasetManifest scan_directory(const std::filesystem::path& dir);

/// Seeded shuffle of the sorted path list: first train_n are train, the next
/// test_n test, the rest are dropped.
DatasetManifest split_dataset(const DatasetManifest& manifest, std::size_t train_n, std::size_t test_n,
                              std::uint64_t seed);

/// Loads an entry and resizes it to the manifest target when one is set.
Image load_entry(const DatasetManifest& manifest, const DatasetEntry& entry);
std::vector<Image> load_split(const DatasetManifest& manifest, Split s);

/// Dark background, 2-5 ellipses, 1-3 thin bright segments, mild linear
/// shading. Deterministic in (seed, index); values on the 2^-24 lattice in [0, 1].
Image generate_phantom(std::size_t size, std::uint64_t seed, std::size_t index);

/// Writes phantom_00000.png ... as 16-bit PNG plus manifest.jsonl.
DatasetManifest generate_phantoms(const std::filesystem::path& out_dir, std::size_t count, std::size_t size,
                                  std::uint64_t seed, std::size_t jobs = 1);

/// In-memory variant used by tests and the acceptance run; images are
/// quantised to 16 bits exactly as the writer would store them.
std::vector<Image> phantom_set(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace xdn::data
