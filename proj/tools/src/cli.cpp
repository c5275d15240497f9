#include "xdn_cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>

#include "CLI11.hpp"
#include "xdn/checkpoint.hpp"
#include "xdn/dataset.hpp"
#include "xdn/evaluate.hpp"
#include "xdn/filters.hpp"
#include "xdn/guided.hpp"
#include "xdn/image_io.hpp"
#include "xdn/log.hpp"
#include "xdn/parallel.hpp"
#include "xdn/train.hpp"
#include "xdn_cli/run_config.hpp"

namespace xdn::cli {

namespace fs = std::filesystem;

namespace {

struct Dataset {
  std::vector<Image> images;
  std::vector<std::string> names;
};

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
  return value;
}

// A manifest.jsonl next to the images decides the split; a plain directory is used whole.
Dataset load_dataset(const std::string& dir, data::Split split) {
  if (!fs::is_directory(dir)) throw UsageError("--data: not a directory: " + dir);
  data::DatasetManifest manifest;
  if (fs::exists(fs::path(dir) / "manifest.jsonl")) {
    manifest = data::DatasetManifest::read_jsonl(fs::path(dir) / "manifest.jsonl");
  } else {
    manifest = data::scan_directory(dir);
  }
  auto entries = manifest.select(split);
  if (entries.empty()) entries = manifest.select(data::Split::Unassigned);
  if (entries.empty()) throw std::runtime_error("no " + data::split_name(split) + " images under " + dir);
  Dataset d;
  for (const auto& e : entries) {
    d.images.push_back(data::load_entry(manifest, e));
    d.names.push_back(fs::path(e.path).stem().string());
  }
  return d;
}

nn::Checkpoint open_checkpoint(const std::string& path, const char* flag) {
  require(path, flag);
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such checkpoint: " + path);
  return nn::load_checkpoint(path);
}

std::vector<fs::path> input_images(const std::string& input) {
  require(input, "--input");
  if (fs::is_directory(input)) return io::list_images(input);
  if (!fs::exists(input)) throw UsageError("--input: no such file: " + input);
  return {fs::path(input)};
}

int phantoms(const RunConfig& c, std::ostream& out) {
  const auto dir = fs::absolute(c.out);
  write_resolved(c, dir);
  auto manifest = data::generate_phantoms(dir, c.count, c.size, c.seed, c.jobs);
  if (c.train_n + c.test_n > 0) {
    manifest = data::split_dataset(manifest, c.train_n, c.test_n, c.seed);
    manifest.write_jsonl(dir / "manifest.jsonl");
  }
  out << "wrote " << c.count << " phantoms (" << c.size << "x" << c.size << ") to " << dir.string() << '\n';
  return kExitOk;
}

int synth(const RunConfig& c, std::ostream& out) {
  require(c.data, "--data");
  const auto kinds = c.kind_list();
  const auto overrides = c.noise_overrides();
  write_resolved(c, c.out);
  const auto entries = noise::noise_suite(c.data, kinds, c.seed, c.out, overrides, c.jobs);
  if (!noise::verify_suite(entries)) throw std::runtime_error("synth: written triplets fail the mask identity check");
  out << "wrote " << entries.size() << " noisy/mask pairs to " << c.out << '\n';
  return kExitOk;
}

int pretrain(const RunConfig& c, std::ostream& out) {
  require(c.data, "--data");
  const auto config = c.train_config();
  const auto set = load_dataset(c.data, data::Split::Train);
  write_resolved(c, c.out);
  const auto result = train::pretrain_restoration(set.images, config);
  nn::save_checkpoint(fs::path(c.out) / "restoration.xdnz", result.model, result.meta);
  train::write_log_csv(fs::path(c.out) / "pretrain_log.csv", result.log);
  out << "restoration network: " << set.images.size() << " images, final loss "
      << (result.meta.loss_history.empty() ? 0.0 : result.meta.loss_history.back()) << '\n';
  return kExitOk;
}

int train_cmd(const RunConfig& c, std::ostream& out) {
  require(c.data, "--data");
  const auto config = c.train_config();
  train::NoisePlan plan;
  plan.kinds = c.kind_list();
  plan.overrides = c.noise_overrides();
  const auto set = load_dataset(c.data, data::Split::Train);
  const auto restoration = open_checkpoint(c.restoration, "--restoration");
  write_resolved(c, c.out);
  const auto result = train::train_denoiser(set.images, plan, restoration.model, config);
  nn::save_checkpoint(fs::path(c.out) / "denoiser.xdnz", result.model, result.meta);
  train::write_log_csv(fs::path(c.out) / "train_log.csv", result.log);
  const auto& last = result.log.back();
  out << "denoiser: lambda " << c.lambda << ", final l_res " << last.l_res << ", l_fp " << last.l_fp << '\n';
  return kExitOk;
}

int denoise(const RunConfig& c, std::ostream& out) {
  const auto model = open_checkpoint(c.checkpoint, "--checkpoint");
  const auto inputs = input_images(c.input);
  write_resolved(c, c.out);
  for (const auto& p : inputs)
    io::save_png(train::run_model(model.model, io::load_image(p)), fs::path(c.out) / (p.stem().string() + ".png"), 16);
  out << "denoised " << inputs.size() << " image(s) into " << c.out << '\n';
  return kExitOk;
}

int explain(const RunConfig& c, std::ostream& out) {
  const auto model = c.checkpoint.empty() ? open_checkpoint(c.restoration, "--checkpoint or --restoration")
                                           : open_checkpoint(c.checkpoint, "--checkpoint");
  const auto inputs = input_images(c.input);
  write_resolved(c, c.out);
  for (const auto& p : inputs) {
    const auto result = xai::guided_backward(model.model, io::load_image(p).to_tensor());
    const auto stem = fs::path(c.out) / (p.stem().string() + "_saliency");
    io::save_png(xai::saliency_visualize(result.saliency), stem.string() + ".png");
    io::write_raster(Image::from_tensor(result.saliency.values), stem.string() + ".xsal");
  }
  out << "saliency for " << inputs.size() << " image(s) in " << c.out << '\n';
  return kExitOk;
}

int baseline(const RunConfig& c, std::ostream& out) {
  const auto inputs = input_images(c.input.empty() ? c.data : c.input);
  const auto names = c.filters.empty() ? filters::filter_names() : c.filters;
  for (const auto& f : names)
    if (std::find(filters::filter_names().begin(), filters::filter_names().end(), f) == filters::filter_names().end())
      throw UsageError("unknown filter '" + f + "'");
  write_resolved(c, c.out);
  for (const auto& f : names) fs::create_directories(fs::path(c.out) / f);
  parallel_for(inputs.size(), c.jobs, [&](std::size_t i) {
    const auto img = io::load_image(inputs[i]);
    for (const auto& f : names)
      io::save_png(filters::apply_named(f, img), fs::path(c.out) / f / (inputs[i].stem().string() + ".png"), 16);
  });
  out << "filtered " << inputs.size() << " image(s) with " << names.size() << " filter(s)\n";
  return kExitOk;
}

int evaluate(const RunConfig& c, std::ostream& out) {
  require(c.data, "--data");
  const auto kinds = c.kind_list();
  const auto method_specs = c.methods.empty() ? filters::filter_names() : c.methods;

  // Networks must outlive the method closures.
  std::vector<std::unique_ptr<nn::Checkpoint>> nets;
  std::vector<eval::Method> methods;
  for (const auto& spec : method_specs) {
    const auto eq = spec.find('=');
    if (eq != std::string::npos) {
      nets.push_back(std::make_unique<nn::Checkpoint>(open_checkpoint(spec.substr(eq + 1), "--methods")));
      methods.push_back(eval::network_method(spec.substr(0, eq), nets.back()->model));
    } else if (spec == "oracle") {
      methods.push_back(eval::oracle_method());
    } else {
      try {
        methods.push_back(eval::filter_method(spec));
      } catch (const std::invalid_argument&) {
        throw UsageError("unknown method '" + spec + "' (filter name, oracle, or NAME=CHECKPOINT)");
      }
    }
  }
  std::unique_ptr<nn::Checkpoint> restoration;
  if (!c.restoration.empty()) restoration = std::make_unique<nn::Checkpoint>(open_checkpoint(c.restoration, "--restoration"));

  eval::EvalOptions options;
  options.seed = c.seed;
  options.ssim.window = metrics::parse_window(c.metric_mode);
  options.overrides = c.noise_overrides();
  options.restoration = restoration ? &restoration->model : nullptr;
  options.jobs = c.jobs;

  const auto set = load_dataset(c.data, data::Split::Test);
  write_resolved(c, c.out);
  const auto report = eval::evaluate(methods, set.images, set.names, kinds, options);
  report.write_csv(fs::path(c.out) / "eval.csv");
  report.write_aggregates_json(fs::path(c.out) / "aggregates.json");

  out << std::left << std::setw(16) << "kind" << std::setw(14) << "method" << std::right << std::setw(10) << "psnr_db"
      << std::setw(9) << "ssim" << '\n';
  for (const auto& a : report.aggregates)
    out << std::left << std::setw(16) << a.kind << std::setw(14) << a.method << std::right << std::fixed
        << std::setprecision(3) << std::setw(10) << a.psnr_db << std::setprecision(4) << std::setw(9) << a.ssim
        << std::defaultfloat << '\n';
  return kExitOk;
}

void add_common(CLI::App* sub, FlagValues& f) {
  sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--jobs", f.jobs, "worker threads (synth, baseline, evaluate, phantoms)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"xdn: feature-preserving denoising workflow", "xdn"};
  app.require_subcommand(1, 1);
  FlagValues f;

  auto* ph = app.add_subcommand("phantoms", "generate synthetic phantoms");
  add_common(ph, f);
  ph->add_option("--count", f.count, "number of phantoms");
  ph->add_option("--size", f.size, "side length (multiple of 16)");
  ph->add_option("--train-n", f.train_n, "images tagged train in the manifest");
  ph->add_option("--test-n", f.test_n, "images tagged test in the manifest");

  auto* sy = app.add_subcommand("synth", "corrupt a directory with noise models");
  add_common(sy, f);
  sy->add_option("--data", f.data, "clean image directory");
  sy->add_option("--kinds", f.kinds, "comma-separated noise kinds or 'all'");

  auto* pt = app.add_subcommand("pretrain", "train the restoration network clean -> clean");
  add_common(pt, f);
  pt->add_option("--data", f.data, "training image directory");
  pt->add_option("--base-width", f.base_width, "U-Net base width");
  pt->add_option("--epochs", f.epochs, "pretraining epochs");
  pt->add_option("--lr", f.lr, "pretraining learning rate");
  pt->add_option("--batch-size", f.batch_size, "images per optimiser step");
  pt->add_option("--sigma-pre", f.sigma_pre, "input perturbation during pretraining");

  auto* tr = app.add_subcommand("train", "train the denoiser with L_res + lambda * L_FP");
  add_common(tr, f);
  tr->add_option("--data", f.data, "training image directory");
  tr->add_option("--restoration", f.restoration, "restoration checkpoint");
  tr->add_option("--kinds", f.kinds, "noise kinds sampled during training");
  tr->add_option("--lambda", f.lambda, "feature-preserving loss weight");
  tr->add_option("--base-width", f.base_width, "U-Net base width");
  tr->add_option("--epochs", f.epochs, "training epochs");
  tr->add_option("--lr", f.lr, "Adam learning rate");
  tr->add_option("--batch-size", f.batch_size, "images per optimiser step");
  tr->add_option("--init", f.init, "fresh | restoration");

  auto* dn = app.add_subcommand("denoise", "run a denoiser checkpoint on images");
  add_common(dn, f);
  dn->add_option("--checkpoint", f.checkpoint, "denoiser checkpoint");
  dn->add_option("--input", f.input, "image or directory");

  auto* ex = app.add_subcommand("explain", "guided-backprop saliency of a checkpoint on images");
  add_common(ex, f);
  ex->add_option("--checkpoint", f.checkpoint, "network to explain");
  ex->add_option("--restoration", f.restoration, "used when --checkpoint is absent");
  ex->add_option("--input", f.input, "image or directory");

  auto* bl = app.add_subcommand("baseline", "apply classical filters to images");
  add_common(bl, f);
  bl->add_option("--input,--data", f.input, "image or directory");
  bl->add_option("--filters", f.filters, "filter names (default: all)")->delimiter(',');

  auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM report on held-out images");
  add_common(ev, f);
  ev->add_option("--data", f.data, "clean image directory (test split when a manifest exists)");
  ev->add_option("--kinds", f.kinds, "noise kinds to score");
  ev->add_option("--methods", f.methods, "filter names, oracle, or NAME=CHECKPOINT")->delimiter(',');
  ev->add_option("--restoration", f.restoration, "restoration checkpoint for held-out feature loss");
  ev->add_option("--metric-mode", f.metric_mode, "windowed | global");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "xdn: " << e.what() << '\n';
    if (const auto subs = app.get_subcommands(); !subs.empty()) err << subs.front()->help();
    return kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto config = resolve_config(command, f);
    log::info("xdn ", command, " seed ", config.seed, " -> ", config.out);
    if (command == "phantoms") return phantoms(config, out);
    if (command == "synth") return synth(config, out);
    if (command == "pretrain") return pretrain(config, out);
    if (command == "train") return train_cmd(config, out);
    if (command == "denoise") return denoise(config, out);
    if (command == "explain") return explain(config, out);
    if (command == "baseline") return baseline(config, out);
    return evaluate(config, out);
  } catch (const UsageError& e) {
    err << "xdn " << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "xdn " << command << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace xdn::cli
