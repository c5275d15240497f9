#pragma once

// Resolved settings for one `xdn` invocation. Every field has a default, can
// be set from a JSON config file, and can be overridden by a flag.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdn/noise.hpp"
#include "xdn/train.hpp"

namespace xdn::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string out = "xdn_out";
  std::size_t jobs = 1;

  // data
  std::string data;
  std::string input;
  std::size_t count = 200;
  std::size_t size = 64;
  std::size_t train_n = 0;
  std::size_t test_n = 0;

  // noise
  std::string kinds = "gaussian";
  std::map<std::string, noise::Params> noise;

  // training
  double lambda = 0.1;
  std::size_t base_width = 8;
  std::size_t epochs = 30;
  std::size_t pretrain_epochs = 20;
  double lr = 1e-4;
  double lr_pretrain = 1e-3;
  std::size_t batch_size = 8;
  double sigma_pre = 0.0;
  std::string init = "fresh";

  // models and evaluation
  std::string restoration;
  std::string checkpoint;
  std::vector<std::string> methods;
  std::vector<std::string> filters;
  std::string metric_mode = "windowed";

  nlohmann::ordered_json to_json() const;
  /// Applies the keys present in `j`; unknown keys are a usage error.
  void merge_json(const nlohmann::json& j);

  std::vector<noise::NoiseKind> kind_list() const;
  std::map<noise::NoiseKind, noise::Params> noise_overrides() const;
  train::TrainConfig train_config() const;
};

/// Values given on the command line; unset fields leave the config alone.
struct FlagValues {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::optional<std::string> data;
  std::optional<std::string> input;
  std::optional<std::size_t> count;
  std::optional<std::size_t> size;
  std::optional<std::size_t> train_n;
  std::optional<std::size_t> test_n;
  std::optional<std::string> kinds;
  std::optional<double> lambda;
  std::optional<std::size_t> base_width;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<double> sigma_pre;
  std::optional<std::string> init;
  std::optional<std::string> restoration;
  std::optional<std::string> checkpoint;
  std::optional<std::vector<std::string>> methods;
  std::optional<std::vector<std::string>> filters;
  std::optional<std::string> metric_mode;
};

/// default < config file < flags. On `pretrain`, --epochs and --lr set the
/// pretraining epochs and rate.
RunConfig resolve_config(const std::string& command, const FlagValues& flags);

/// Writes `run_config.json` (resolved config, including the master seed) into `dir`.
void write_resolved(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace xdn::cli
