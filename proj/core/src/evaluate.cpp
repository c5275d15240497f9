#include "xdn/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "xdn/filters.hpp"
#include "xdn/parallel.hpp"
#include "xdn/train.hpp"

namespace xdn::eval {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Method identity_method(std::string name) {
  return {std::move(name), [](const Image& x) { return x; }, nullptr};
}

Method oracle_method(std::string name) {
  Method m{std::move(name), nullptr, nullptr};
  m.oracle = true;
  return m;
}

Method filter_method(const std::string& filter_name) {
  filters::apply_named(filter_name, Image(16, 16, 0.5));  // rejects unknown names early
  return {filter_name, [filter_name](const Image& x) { return filters::apply_named(filter_name, x); }, nullptr};
}

Method network_method(std::string name, const nn::Model& denoiser) {
  return {std::move(name), [&denoiser](const Image& x) { return train::run_model(denoiser, x); }, &denoiser};
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "image,kind,method,psnr_db,ssim\n";
  for (const auto& r : rows)
    os << r.image << ',' << r.kind << ',' << r.method << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void EvalReport::write_aggregates_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& a : aggregates) {
    nlohmann::ordered_json j{{"kind", a.kind}, {"method", a.method}, {"count", a.count},
                             {"psnr_db", a.psnr_db}, {"ssim", a.ssim}};
    if (a.feature_loss) j["feature_loss"] = *a.feature_loss;
    arr.push_back(std::move(j));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << arr.dump(2) << '\n';
}

const Aggregate& EvalReport::aggregate(const std::string& kind, const std::string& method) const {
  for (const auto& a : aggregates)
    if (a.kind == kind && a.method == method) return a;
  throw std::out_of_range("no aggregate for " + kind + "/" + method);
}

std::vector<Aggregate> aggregate_rows(const std::vector<EvalRow>& rows) {
  std::vector<Aggregate> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Aggregate& a) { return a.kind == r.kind && a.method == r.method; });
    if (it == out.end()) it = out.insert(out.end(), Aggregate{r.kind, r.method, 0, 0.0, 0.0, std::nullopt});
    it->psnr_db += r.psnr_db;
    it->ssim += r.ssim;
    ++it->count;
  }
  for (auto& a : out) {
    a.psnr_db /= static_cast<double>(a.count);
    a.ssim /= static_cast<double>(a.count);
  }
  return out;
}

EvalReport evaluate(const std::vector<Method>& methods, const std::vector<Image>& clean,
                    const std::vector<std::string>& image_names, const std::vector<noise::NoiseKind>& kinds,
                    const EvalOptions& options) {
  if (image_names.size() != clean.size()) throw std::invalid_argument("evaluate: one name per image required");
  std::vector<Method> all{identity_method()};
  all.insert(all.end(), methods.begin(), methods.end());
  std::set<std::string> seen;
  for (const auto& m : all)
    if (!seen.insert(m.name).second) throw std::invalid_argument("duplicate method name: " + m.name);

  const std::size_t nm = all.size(), ni = clean.size(), nk = kinds.size();
  std::vector<EvalRow> rows(nk * ni * nm);
  std::vector<double> fl(nk * ni * nm, 0.0);
  parallel_for(nk * ni, options.jobs, [&](std::size_t job) {
    const std::size_t k = job / ni, i = job % ni;
    const auto it = options.overrides.find(kinds[k]);
    const auto spec = noise::NoiseSpec::make(kinds[k], noise::suite_seed(options.seed, i, kinds[k]),
                                             it == options.overrides.end() ? noise::Params{} : it->second);
    const auto pair = noise::apply_noise(clean[i], spec);
    for (std::size_t m = 0; m < nm; ++m) {
      const auto out = all[m].oracle ? pair.clean : all[m].denoise(pair.noisy);
      const std::size_t slot = (k * ni + i) * nm + m;
      rows[slot] = {image_names[i], std::string(noise::kind_name(kinds[k])), all[m].name,
                    metrics::psnr(pair.clean, out), metrics::ssim(pair.clean, out, options.ssim)};
      if (options.restoration && all[m].network) fl[slot] = train::feature_loss(*options.restoration, out, pair.clean);
    }
  });

  EvalReport report;
  report.rows = std::move(rows);
  report.aggregates = aggregate_rows(report.rows);
  if (options.restoration) {
    for (std::size_t k = 0; k < nk; ++k)
      for (std::size_t m = 0; m < nm; ++m) {
        if (!all[m].network || ni == 0) continue;
        double sum = 0.0;
        for (std::size_t i = 0; i < ni; ++i) sum += fl[(k * ni + i) * nm + m];
        const std::string kind(noise::kind_name(kinds[k]));
        for (auto& a : report.aggregates)
          if (a.kind == kind && a.method == all[m].name) a.feature_loss = sum / static_cast<double>(ni);
      }
  }
  return report;
}

}  // namespace xdn::eval
