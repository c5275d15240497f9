#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xdn/image.hpp"
#include "xdn/metrics.hpp"
#include "xdn/model.hpp"
#include "xdn/noise.hpp"

namespace xdn::eval {

struct Method {
  std::string name;
  std::function<Image(const Image& noisy)> denoise;
  /// Learned methods: the denoiser network, used for held-out feature loss.
  const nn::Model* network = nullptr;
  /// Scored on the clean image itself; `denoise` is not called.
  bool oracle = false;
};

/// Returns its input; the "noisy" row of every report.
Method identity_method(std::string name = "noisy");
/// Returns the clean image; an upper bound that must score PSNR cap and SSIM 1.
Method oracle_method(std::string name = "oracle");
Method filter_method(const std::string& filter_name);
Method network_method(std::string name, const nn::Model& denoiser);

struct EvalRow {
  std::string image;
  std::string kind;
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct Aggregate {
  std::string kind;
  std::string method;
  std::size_t count = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> feature_loss;  // learned methods, when a restoration net is given
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<Aggregate> aggregates;

  void write_csv(const std::filesystem::path& path) const;
  void write_aggregates_json(const std::filesystem::path& path) const;
  const Aggregate& aggregate(const std::string& kind, const std::string& method) const;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  metrics::SsimParams ssim;
  std::map<noise::NoiseKind, noise::Params> overrides;
  /// When set, each learned method also reports the mean guided-saliency
  /// distance between its outputs and the clean images.
  const nn::Model* restoration = nullptr;
  std::size_t jobs = 1;
};

/// Every (image, kind) pair is corrupted once with a seed derived from
/// (options.seed, image index, kind) and handed to every method. A "noisy"
/// identity row is always included first.
EvalReport evaluate(const std::vector<Method>& methods, const std::vector<Image>& clean,
                    const std::vector<std::string>& image_names, const std::vector<noise::NoiseKind>& kinds,
                    const EvalOptions& options);

/// Recomputes the aggregates from rows (mean per kind and method).
std::vector<Aggregate> aggregate_rows(const std::vector<EvalRow>& rows);

}  // namespace xdn::eval
