#include "xdn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xdn/guided.hpp"
#include "xdn/log.hpp"
#include "xdn/rng.hpp"

namespace xdn::train {

namespace {

constexpr std::uint64_t kTagRestorationInit = 0x72657374;
constexpr std::uint64_t kTagDenoiserInit = 0x64656e6f;
constexpr std::uint64_t kTagShuffle = 0x73687566;
constexpr std::uint64_t kTagNoise = 0x6e6f6973;
constexpr std::uint64_t kTagKind = 0x6b696e64;
constexpr std::uint64_t kTagPerturb = 0x70657274;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void require_dataset(const std::vector<Image>& clean, std::size_t multiple) {
  if (clean.empty()) throw TrainingError("training set is empty");
  for (const auto& img : clean) {
    if (!img.same_dims(clean.front())) throw TrainingError("training images differ in size");
    if (img.height() % multiple != 0 || img.width() % multiple != 0)
      throw TrainingError("training images must have dims divisible by " + std::to_string(multiple) + ", got " +
                          std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

// Concatenates (1, C, H, W) tensors along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& items) {
  const auto& s = items.front().shape();
  Shape shape = s;
  shape[0] = items.size();
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) data.insert(data.end(), t.values().begin(), t.values().end());
  return Tensor(shape, std::move(data));
}

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v))
    throw TrainingError(std::string(what) + " became non-finite at step " + std::to_string(step) +
                        "; lower the learning rate");
}

nn::UNetConfig net_config(const TrainConfig& c) {
  nn::UNetConfig u;
  u.base_width = c.base_width;
  u.depth = c.depth;
  u.validate();
  return u;
}

// Starts the sigmoid output at the data mean instead of 0.5. Without this the
// first Adam steps drive every decoder unit the same way and can kill all ReLUs.
void init_output_bias(nn::Model& model, const std::vector<Image>& targets) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& img : targets)
    for (double v : img.pixels()) {
      sum += v;
      ++n;
    }
  const double mu = std::clamp(sum / static_cast<double>(n), 1e-3, 1.0 - 1e-3);
  for (const auto& p : model.parameters())
    if (p.name == "outc.bias") {
      const bool linear = model.config() && model.config()->output_activation == nn::OutputActivation::Linear;
      p.var->mutable_value().fill(static_cast<float>(linear ? mu : std::log(mu / (1.0 - mu))));
    }
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw TrainingError("lambda must be >= 0");
  if (!(lr_pretrain >= 0.0) || !(lr_denoise >= 0.0)) throw TrainingError("learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw TrainingError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw TrainingError("Adam epsilon must be positive");
  if (batch_size == 0) throw TrainingError("batch size must be positive");
  if (!(sigma_pre >= 0.0)) throw TrainingError("sigma_pre must be >= 0");
}

std::string init_name(DenoiserInit init) { return init == DenoiserInit::Fresh ? "fresh" : "restoration"; }

DenoiserInit parse_init(const std::string& name) {
  if (name == "fresh") return DenoiserInit::Fresh;
  if (name == "restoration") return DenoiserInit::Restoration;
  throw TrainingError("unknown denoiser init: " + name + " (expected fresh or restoration)");
}

Adam::Adam(const nn::Model& model, double lr, double beta1, double beta2, double eps, std::size_t warmup_steps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), warmup_(warmup_steps) {
  for (const auto& p : model.parameters()) {
    if (!p.var->requires_grad()) throw TrainingError("Adam given a frozen parameter: " + p.name);
    params_.push_back(p.var);
    m_.emplace_back(p.var->value().size(), 0.0);
    v_.emplace_back(p.var->value().size(), 0.0);
  }
}

double Adam::current_lr() const {
  if (warmup_ == 0 || t_ >= warmup_) return lr_;
  return lr_ * static_cast<double>(t_ + 1) / static_cast<double>(warmup_);
}

void Adam::step() {
  const double lr = current_lr();
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->mutable_value();
    const auto& grad = params_[k]->grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      value[i] = static_cast<double>(static_cast<float>(value[i] - update));
    }
  }
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TrainingError("cannot write log " + path.string());
  os << "step,epoch,l_res,l_fp,total,wall_ms\n";
  for (const auto& r : rows)
    os << r.step << ',' << r.epoch << ',' << fmt(r.l_res) << ',' << fmt(r.l_fp) << ',' << fmt(r.total) << ','
       << fmt(r.wall_ms) << '\n';
  if (!os) throw TrainingError("failed writing log " + path.string());
}

std::vector<LogRow> read_log_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw TrainingError("cannot open log " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<LogRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (auto& s : f) std::getline(ls, s, ',');
    LogRow r;
    r.step = std::stoull(f[0]);
    r.epoch = std::stoull(f[1]);
    r.l_res = std::stod(f[2]);
    r.l_fp = std::stod(f[3]);
    r.total = std::stod(f[4]);
    r.wall_ms = std::stod(f[5]);
    rows.push_back(r);
  }
  return rows;
}

ad::Var residual_loss(const Tensor& noisy, const ad::Var& denoised, const Tensor& mask) {
  require_same_shape(noisy, denoised->value(), "residual_loss");
  require_same_shape(noisy, mask, "residual_loss");
  const auto r = ad::sub(ad::constant(noisy), denoised);
  return ad::mse_mean(r, ad::constant(mask));
}

TrainResult pretrain_restoration(const std::vector<Image>& clean, const TrainConfig& config) {
  config.validate();
  const auto cfg = net_config(config);
  require_dataset(clean, cfg.spatial_multiple());

  TrainResult out{nn::unet_build(cfg, derive_seed(config.seed, {kTagRestorationInit})), {}, {}};
  auto& model = out.model;
  if (config.output_bias_from_data) init_output_bias(model, clean);
  Adam adam(model, config.lr_pretrain, config.beta1, config.beta2, config.adam_eps, config.warmup_steps);
  const auto t0 = Clock::now();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    const auto order = shuffled_indices(clean.size(), derive_seed(config.seed, {kTagShuffle, 0, epoch}));
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::vector<Image> batch;
      for (std::size_t i = b0; i < b1; ++i) batch.push_back(clean[order[i]]);
      const Tensor target = stack_images(batch);
      Tensor input = target;
      if (config.sigma_pre > 0.0) {
        std::mt19937_64 rng(derive_seed(config.seed, {kTagPerturb, epoch, b0}));
        std::normal_distribution<double> n(0.0, config.sigma_pre);
        for (double& v : input.data()) v += n(rng);
      }
      const auto loss = ad::mse_mean(model.forward(input), ad::constant(target));
      const double l = loss->value()[0];
      check_finite(l, "reconstruction loss", step);
      ad::backward(loss);
      adam.step();
      model.zero_grad();
      out.log.push_back({step, epoch, l, 0.0, l, elapsed_ms(t0)});
      epoch_sum += l;
      ++batches;
      ++step;
    }
    out.meta.loss_history.push_back(epoch_sum / static_cast<double>(batches));
    log::info("pretrain epoch ", epoch + 1, "/", config.pretrain_epochs, " loss ", out.meta.loss_history.back());
  }
  out.meta.role = "restoration";
  out.meta.seed = config.seed;
  out.meta.extra["lr"] = fmt(config.lr_pretrain);
  out.meta.extra["epochs"] = std::to_string(config.pretrain_epochs);
  out.meta.extra["sigma_pre"] = fmt(config.sigma_pre);
  return out;
}

Tensor saliency_of(const nn::Model& restoration, const Image& img, bool gate_on_signal) {
  xai::GuidedOptions opt;
  opt.gate_on_signal = gate_on_signal;
  return xai::guided_backward(restoration, img.to_tensor(), nullptr, opt).saliency.values;
}

double feature_loss(const nn::Model& restoration, const Image& denoised, const Image& clean, bool gate_on_signal) {
  const auto a = saliency_of(restoration, denoised, gate_on_signal);
  const auto b = saliency_of(restoration, clean, gate_on_signal);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

Image run_model(const nn::Model& model, const Image& img) { return Image::from_tensor(model.infer(img.to_tensor())); }

TrainResult train_denoiser(const std::vector<Image>& clean, const NoisePlan& plan, const nn::Model& restoration,
                           const TrainConfig& config) {
  config.validate();
  if (!restoration.config()) throw TrainingError("restoration model has no U-Net config");
  if (plan.kinds.empty()) throw TrainingError("no noise kinds to train on");
  const auto rcfg = *restoration.config();
  require_dataset(clean, rcfg.spatial_multiple());
  const auto cfg = net_config(config);
  if (config.denoiser_init == DenoiserInit::Restoration && !(cfg == rcfg))
    throw TrainingError("denoiser initialised from the restoration net must share its config");
  for (const auto& [kind, params] : plan.overrides) noise::NoiseSpec::make(kind, 0, params);

  const std::uint64_t restoration_sum = restoration.checksum();
  const auto f_rec = restoration.frozen();
  xai::GuidedOptions gopt;
  gopt.gate_on_signal = config.gate_on_signal;

  TrainResult out{config.denoiser_init == DenoiserInit::Restoration
                      ? restoration.clone()
                      : nn::unet_build(cfg, derive_seed(config.seed, {kTagDenoiserInit})),
                  {},
                  {}};
  auto& model = out.model;
  if (config.denoiser_init == DenoiserInit::Fresh && config.output_bias_from_data) init_output_bias(model, clean);
  Adam adam(model, config.lr_denoise, config.beta1, config.beta2, config.adam_eps, config.warmup_steps);

  // Saliency of the clean images depends only on the frozen net, so compute it once.
  std::vector<Tensor> f_clean;
  f_clean.reserve(clean.size());
  for (const auto& img : clean)
    f_clean.push_back(xai::guided_backward(f_rec, noise::snap_to_lattice(img).to_tensor(), nullptr, gopt)
                          .saliency.values);

  const bool use_graph = config.lambda > 0.0 || config.force_feature_graph;
  const auto t0 = Clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(clean.size(), derive_seed(config.seed, {kTagShuffle, 1, epoch}));
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::vector<Image> noisy, mask;
      std::vector<Tensor> fc;
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t idx = order[i];
        std::mt19937_64 krng(derive_seed(config.seed, {kTagKind, epoch, idx}));
        const auto kind = plan.kinds[uniform_index(krng, plan.kinds.size())];
        const auto it = plan.overrides.find(kind);
        const auto spec = noise::NoiseSpec::make(kind, derive_seed(config.seed, {kTagNoise, epoch, idx}),
                                                 it == plan.overrides.end() ? noise::Params{} : it->second);
        auto pair = noise::apply_noise(clean[idx], spec);
        noisy.push_back(std::move(pair.noisy));
        mask.push_back(std::move(pair.mask));
        fc.push_back(f_clean[idx]);
      }
      const Tensor noisy_t = stack_images(noisy);
      const Tensor mask_t = stack_images(mask);
      const Tensor fc_t = stack_batch(fc);

      const auto denoised = model.forward(noisy_t);
      const auto l_res = residual_loss(noisy_t, denoised, mask_t);
      double l_fp = 0.0, total = 0.0;
      if (use_graph) {
        const auto gates = xai::guided_backward(f_rec, denoised->value(), nullptr, gopt).gates;
        const auto f_den = xai::saliency_graph(f_rec, denoised, gates);
        const auto lfp = xai::feature_preserving_loss(f_den, fc_t);
        const auto loss = ad::scale_add(l_res, lfp, config.lambda);
        l_fp = lfp->value()[0];
        total = loss->value()[0];
        check_finite(total, "training loss", step);
        ad::backward(loss);
      } else {
        const auto f_den = xai::guided_backward(f_rec, denoised->value(), nullptr, gopt).saliency.values;
        for (std::size_t i = 0; i < f_den.size(); ++i) {
          const double d = f_den[i] - fc_t[i];
          l_fp += d * d;
        }
        l_fp /= static_cast<double>(f_den.size());
        total = l_res->value()[0] + config.lambda * l_fp;
        check_finite(total, "training loss", step);
        ad::backward(l_res);
      }
      adam.step();
      model.zero_grad();
      out.log.push_back({step, epoch, l_res->value()[0], l_fp, total, elapsed_ms(t0)});
      epoch_sum += total;
      ++batches;
      ++step;
    }
    out.meta.loss_history.push_back(epoch_sum / static_cast<double>(batches));
    log::info("train epoch ", epoch + 1, "/", config.epochs, " loss ", out.meta.loss_history.back());
  }

  if (restoration.checksum() != restoration_sum || f_rec.checksum() != restoration_sum)
    throw TrainingError("restoration parameters changed during denoiser training");

  std::string kinds;
  for (auto k : plan.kinds) kinds += (kinds.empty() ? "" : ",") + std::string(noise::kind_name(k));
  out.meta.role = "denoiser";
  out.meta.seed = config.seed;
  out.meta.extra["lambda"] = fmt(config.lambda);
  out.meta.extra["lr"] = fmt(config.lr_denoise);
  out.meta.extra["epochs"] = std::to_string(config.epochs);
  out.meta.extra["kinds"] = kinds;
  out.meta.extra["init"] = init_name(config.denoiser_init);
  out.meta.extra["restoration_checksum"] = hex64(restoration_sum);
  return out;
}

}  // namespace xdn::train
