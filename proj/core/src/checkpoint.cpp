#include "xdn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binary.hpp"
#include "json.hpp"
#include "xdn/rng.hpp"

namespace xdn::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'X', 'D', 'N', 'Z'};

json config_to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"base_width", c.base_width},
          {"depth", c.depth},
          {"output_activation", c.output_activation == OutputActivation::Sigmoid ? "sigmoid" : "linear"}};
}

UNetConfig config_from_json(const json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.out_channels = j.at("out_channels").get<std::size_t>();
  c.base_width = j.at("base_width").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  const auto act = j.at("output_activation").get<std::string>();
  if (act == "sigmoid")
    c.output_activation = OutputActivation::Sigmoid;
  else if (act == "linear")
    c.output_activation = OutputActivation::Linear;
  else
    throw CheckpointError("unknown output activation: " + act);
  return c;
}

std::uint64_t hash_bytes(const std::string& bytes, std::uint64_t h) {
  return fnv1a(std::as_bytes(std::span(bytes.data(), bytes.size())), h);
}

}  // namespace

void save_checkpoint(const fs::path& path, const Model& model, const CheckpointMeta& meta) {
  if (!model.config()) throw CheckpointError("only U-Net models carry a config and can be checkpointed");
  json manifest = json::array();
  std::ostringstream payload(std::ios::binary);
  for (const auto& p : model.parameters()) {
    const auto& v = p.var->value();
    manifest.push_back({{"name", p.name}, {"shape", v.shape()}});
    for (double x : v.values()) {
      const auto f = static_cast<float>(x);
      if (static_cast<double>(f) != x)
        throw CheckpointError("parameter " + p.name + " is not float-representable");
      detail::put_f32(payload, f);
    }
  }
  const json header{{"config", config_to_json(*model.config())},
                    {"meta",
                     {{"role", meta.role},
                      {"seed", meta.seed},
                      {"loss_history", meta.loss_history},
                      {"extra", meta.extra}}},
                    {"manifest", manifest}};
  const std::string head = header.dump();
  const std::string body = payload.str();
  const std::uint64_t digest = hash_bytes(body, hash_bytes(head, 0xcbf29ce484222325ULL));

  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(head.size()));
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(digest & 0xffffffffu));
    detail::put_u32(os, static_cast<std::uint32_t>(digest >> 32));
    if (!os) throw CheckpointError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string where = path.string() + ": ";

  char magic[4] = {};
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw CheckpointError(where + "bad magic");
  std::uint32_t version = 0, head_len = 0;
  if (!detail::get_u32(is, version)) throw CheckpointError(where + "truncated header");
  if (version != kCheckpointVersion) throw CheckpointError(where + "unsupported version " + std::to_string(version));
  if (!detail::get_u32(is, head_len)) throw CheckpointError(where + "truncated header");
  if (head_len > (64u << 20)) throw CheckpointError(where + "implausible header length");
  std::string head(head_len, '\0');
  if (!is.read(head.data(), head_len)) throw CheckpointError(where + "truncated header");

  json header;
  UNetConfig config;
  CheckpointMeta meta;
  try {
    header = json::parse(head);
    config = config_from_json(header.at("config"));
    config.validate();
    const auto& m = header.at("meta");
    meta.role = m.at("role").get<std::string>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.loss_history = m.at("loss_history").get<std::vector<double>>();
    meta.extra = m.at("extra").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(where + "invalid config: " + e.what());
  }

  auto model = unet_build(config, 0);
  const auto& manifest = header.at("manifest");
  if (!manifest.is_array() || manifest.size() != model.parameters().size())
    throw CheckpointError(where + "parameter manifest does not match the configured network");

  std::size_t total = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& p = model.parameters()[i];
    try {
      if (manifest[i].at("name").get<std::string>() != p.name ||
          manifest[i].at("shape").get<Shape>() != p.var->shape())
        throw CheckpointError(where + "manifest entry " + std::to_string(i) + " does not match parameter " + p.name);
    } catch (const json::exception& e) {
      throw CheckpointError(where + "malformed manifest: " + e.what());
    }
    total += p.var->value().size();
  }

  std::string body(total * 4, '\0');
  if (!is.read(body.data(), static_cast<std::streamsize>(body.size())))
    throw CheckpointError(where + "truncated parameter payload");
  std::uint32_t lo = 0, hi = 0;
  if (!detail::get_u32(is, lo) || !detail::get_u32(is, hi)) throw CheckpointError(where + "missing checksum");
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError(where + "trailing bytes after checksum");
  const std::uint64_t stored = (static_cast<std::uint64_t>(hi) << 32) | lo;
  if (stored != hash_bytes(body, hash_bytes(head, 0xcbf29ce484222325ULL)))
    throw CheckpointError(where + "checksum mismatch (file corrupted)");

  std::istringstream ps(body, std::ios::binary);
  for (const auto& p : model.parameters()) {
    auto& v = p.var->mutable_value();
    for (double& x : v.data()) {
      float f = 0.0f;
      detail::get_f32(ps, f);
      if (!std::isfinite(f)) throw CheckpointError(where + "non-finite value in " + p.name);
      x = f;
    }
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace xdn::nn
