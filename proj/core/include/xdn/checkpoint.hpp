#pragma once

// Checkpoint file layout (little-endian):
//   "XDNZ"  u32 version  u32 header_bytes  header (JSON: config, meta, manifest)
//   float32 parameter payload in manifest order
//   u64 FNV-1a over header and payload

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdn/model.hpp"

namespace xdn::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string role;  // "restoration" | "denoiser"
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
  std::map<std::string, std::string> extra;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  Model model;
  CheckpointMeta meta;
};

/// Parameters must be float-representable (unet_build and the optimiser keep
/// them so); anything else is rejected rather than silently rounded.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xdn::nn
