#include "xdn_cli/run_config.hpp"

#include <fstream>

#include "xdn/metrics.hpp"

namespace xdn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename T>
void take(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json noise_j = nlohmann::ordered_json::object();
  for (const auto& [kind, params] : noise) noise_j[kind] = params;
  return {{"command", command},
          {"seed", seed},
          {"out", out},
          {"jobs", jobs},
          {"data", data},
          {"input", input},
          {"count", count},
          {"size", size},
          {"train_n", train_n},
          {"test_n", test_n},
          {"kinds", kinds},
          {"noise", noise_j},
          {"lambda", lambda},
          {"base_width", base_width},
          {"epochs", epochs},
          {"pretrain_epochs", pretrain_epochs},
          {"lr", lr},
          {"lr_pretrain", lr_pretrain},
          {"batch_size", batch_size},
          {"sigma_pre", sigma_pre},
          {"init", init},
          {"restoration", restoration},
          {"checkpoint", checkpoint},
          {"methods", methods},
          {"filters", filters},
          {"metric_mode", metric_mode}};
}

void RunConfig::merge_json(const json& j) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  const auto known = RunConfig{}.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
  take(j, "seed", seed);
  take(j, "out", out);
  take(j, "jobs", jobs);
  take(j, "data", data);
  take(j, "input", input);
  take(j, "count", count);
  take(j, "size", size);
  take(j, "train_n", train_n);
  take(j, "test_n", test_n);
  take(j, "kinds", kinds);
  take(j, "noise", noise);
  take(j, "lambda", lambda);
  take(j, "base_width", base_width);
  take(j, "epochs", epochs);
  take(j, "pretrain_epochs", pretrain_epochs);
  take(j, "lr", lr);
  take(j, "lr_pretrain", lr_pretrain);
  take(j, "batch_size", batch_size);
  take(j, "sigma_pre", sigma_pre);
  take(j, "init", init);
  take(j, "restoration", restoration);
  take(j, "checkpoint", checkpoint);
  take(j, "methods", methods);
  take(j, "filters", filters);
  take(j, "metric_mode", metric_mode);
}

std::vector<noise::NoiseKind> RunConfig::kind_list() const {
  try {
    return noise::parse_kind_list(kinds);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::map<noise::NoiseKind, noise::Params> RunConfig::noise_overrides() const {
  std::map<noise::NoiseKind, noise::Params> out;
  for (const auto& [name, params] : noise) {
    try {
      out[noise::parse_kind(name)] = params;
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig c;
  c.lambda = lambda;
  c.lr_pretrain = lr_pretrain;
  c.lr_denoise = lr;
  c.batch_size = batch_size;
  c.pretrain_epochs = pretrain_epochs;
  c.epochs = epochs;
  c.seed = seed;
  c.sigma_pre = sigma_pre;
  c.base_width = base_width;
  try {
    c.denoiser_init = train::parse_init(init);
    c.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return c;
}

RunConfig resolve_config(const std::string& command, const FlagValues& flags) {
  RunConfig c;
  c.command = command;
  if (flags.config) {
    std::ifstream is(*flags.config);
    if (!is) throw UsageError("cannot open config file " + *flags.config);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw UsageError("config file " + *flags.config + ": " + e.what());
    }
    c.merge_json(j);
  }
  take(flags.seed, c.seed);
  take(flags.out, c.out);
  take(flags.jobs, c.jobs);
  take(flags.data, c.data);
  take(flags.input, c.input);
  take(flags.count, c.count);
  take(flags.size, c.size);
  take(flags.train_n, c.train_n);
  take(flags.test_n, c.test_n);
  take(flags.kinds, c.kinds);
  take(flags.lambda, c.lambda);
  take(flags.base_width, c.base_width);
  take(flags.batch_size, c.batch_size);
  take(flags.sigma_pre, c.sigma_pre);
  take(flags.init, c.init);
  take(flags.restoration, c.restoration);
  take(flags.checkpoint, c.checkpoint);
  take(flags.methods, c.methods);
  take(flags.filters, c.filters);
  take(flags.metric_mode, c.metric_mode);
  if (command == "pretrain") {
    take(flags.epochs, c.pretrain_epochs);
    take(flags.lr, c.lr_pretrain);
  } else {
    take(flags.epochs, c.epochs);
    take(flags.lr, c.lr);
  }
  if (c.jobs == 0) throw UsageError("--jobs must be at least 1");
  try {
    metrics::parse_window(c.metric_mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

void write_resolved(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream os(dir / "run_config.json", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (dir / "run_config.json").string());
  os << config.to_json().dump(2) << '\n';
}

}  // namespace xdn::cli
