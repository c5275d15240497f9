#pragma once

// Two-stage training: a restoration U-Net pretrained clean -> clean, then a
// denoiser trained with L = L_res + lambda * L_FP, where L_FP compares guided
// saliency of the frozen restoration net on the denoised and clean images.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdn/autodiff.hpp"
#include "xdn/checkpoint.hpp"
#include "xdn/image.hpp"
#include "xdn/model.hpp"
#include "xdn/noise.hpp"

namespace xdn::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DenoiserInit { Fresh, Restoration };

struct TrainConfig {
  double lambda = 0.1;
  double lr_pretrain = 1e-3;
  double lr_denoise = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Linear learning-rate ramp over the first steps of each stage.
  std::size_t warmup_steps = 0;
  std::size_t batch_size = 8;
  std::size_t pretrain_epochs = 20;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double sigma_pre = 0.0;
  std::size_t base_width = 8;
  std::size_t depth = 4;
  DenoiserInit denoiser_init = DenoiserInit::Fresh;
  /// Freshly built networks start with the output bias at the inverse
  /// activation of the mean training pixel rather than zero.
  bool output_bias_from_data = true;
  /// Guided gating on the incoming signal inside L_FP.
  bool gate_on_signal = true;
  /// Build the saliency graph even when lambda == 0 (only useful to check
  /// that the zero-weighted branch leaves the trajectory untouched).
  bool force_feature_graph = false;

  void validate() const;
};

std::string init_name(DenoiserInit init);
DenoiserInit parse_init(const std::string& name);

/// Adam over every parameter of a model. Parameters are rounded to float
/// after each step so checkpoints stay exact.
class Adam {
 public:
  Adam(const nn::Model& model, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       std::size_t warmup_steps = 0);
  void step();
  /// Learning rate applied by the next step.
  double current_lr() const;
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t warmup_;
  std::size_t t_ = 0;
};

struct LogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_res = 0.0;
  double l_fp = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

/// step,epoch,l_res,l_fp,total,wall_ms with round-trip precision.
void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows);
std::vector<LogRow> read_log_csv(const std::filesystem::path& path);

struct TrainResult {
  nn::Model model;
  nn::CheckpointMeta meta;
  std::vector<LogRow> log;
};

/// mean((I_noise - I_denoised - M)^2)
ad::Var residual_loss(const Tensor& noisy, const ad::Var& denoised, const Tensor& mask);

TrainResult pretrain_restoration(const std::vector<Image>& clean, const TrainConfig& config);

struct NoisePlan {
  /// One kind is drawn uniformly per example; a single entry trains a specialist.
  std::vector<noise::NoiseKind> kinds{noise::NoiseKind::Gaussian};
  std::map<noise::NoiseKind, noise::Params> overrides;
};

TrainResult train_denoiser(const std::vector<Image>& clean, const NoisePlan& plan, const nn::Model& restoration,
                           const TrainConfig& config);

/// Guided saliency of `restoration` on each image (batch of one, all-ones seed).
Tensor saliency_of(const nn::Model& restoration, const Image& img, bool gate_on_signal = true);

/// Mean squared difference between saliency of the denoised and clean image.
double feature_loss(const nn::Model& restoration, const Image& denoised, const Image& clean,
                    bool gate_on_signal = true);

Image run_model(const nn::Model& model, const Image& img);

}  // namespace xdn::train
