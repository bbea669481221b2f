#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "artemis/core/error.hpp"
#include "artemis/dslob/generate.hpp"

namespace artemis::dslob {

inline constexpr char kWindowMagic[4] = {'A', 'R', 'T', 'W'};
inline constexpr std::uint32_t kWindowVersion = 1;
inline constexpr int kManifestVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated window file: " + path);
  return v;
}

}  // namespace detail

inline void write_split(const std::string& path, const WindowSplit& s) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kWindowMagic, 4);
  detail::put<std::uint32_t>(os, kWindowVersion);
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.size()));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.L));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.dx));
  os.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(s.targets.data()), static_cast<std::streamsize>(s.targets.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline WindowSplit read_split(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kWindowMagic, 4) != 0)
    throw std::runtime_error("not a window file (bad magic): " + path);
  const auto version = detail::get<std::uint32_t>(is, path);
  if (version != kWindowVersion) throw std::runtime_error("unsupported window file version " + std::to_string(version));
  WindowSplit s;
  const auto n = detail::get<std::uint64_t>(is, path);
  s.L = static_cast<Eigen::Index>(detail::get<std::uint64_t>(is, path));
  s.dx = static_cast<Eigen::Index>(detail::get<std::uint64_t>(is, path));
  s.values.resize(n * static_cast<std::uint64_t>(s.L * s.dx));
  s.targets.resize(n);
  if (!is.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double))) ||
      !is.read(reinterpret_cast<char*>(s.targets.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw std::runtime_error("truncated window file: " + path);
  return s;
}

inline nlohmann::json report_json(const ValidationReport& r) {
  return {{"ks_stat", r.ks_stat},         {"ks_p", r.ks_p},
          {"acf_max_dev", r.acf_max_dev}, {"acf_band", r.acf_band},
          {"corr_mean_absdiff", r.corr_mean_absdiff},
          {"tail_rel_err", r.tail_rel_err},
          {"gates", {{"ks", r.ks_pass}, {"acf", r.acf_pass}, {"corr", r.corr_pass}, {"tail", r.tail_pass}}},
          {"pass", r.pass}};
}

inline nlohmann::json spec_json(const SyntheticDatasetSpec& s) {
  return {{"seed", s.seed},
          {"n_steps", s.n_steps},
          {"window_len", s.window_len},
          {"horizon", s.horizon},
          {"feature_count", kFeatureCount},
          {"warp", {{"gp_mean", s.warp.gp_mean}, {"gp_var", s.warp.gp_var}, {"length_scale", s.warp.length_scale}}},
          {"snr_ratio", s.snr_ratio},
          {"variance_target", s.variance_target},
          {"seed_csv", s.seed_csv},
          {"seed_min_rows", s.seed_min_rows}};
}

inline nlohmann::json manifest_json(const SyntheticDatasetSpec& spec, const GenerationResult& g) {
  auto split = [](const WindowSplit& s) {
    return nlohmann::json{{"count", s.size()},
                          {"first_end_row", s.end_rows.empty() ? -1 : s.end_rows.front()},
                          {"last_end_row", s.end_rows.empty() ? -1 : s.end_rows.back()}};
  };
  const auto& v = g.vasicek.params;
  const auto va = v.amplified();
  const auto& gp = g.garch.params;
  const auto ga = spec.variance_target ? variance_targeted_amplification(gp) : gp.amplified();
  return {{"format_version", kManifestVersion},
          {"spec", spec_json(spec)},
          {"shape", {{"L", spec.window_len}, {"dx", kFeatureCount}}},
          {"splits", {{"train", split(g.data.train)}, {"val", split(g.data.val)}, {"test", split(g.data.test)}}},
          {"fitted",
           {{"vasicek", {{"theta", v.theta}, {"mu", v.mu}, {"sigma", v.sigma}}},
            {"vasicek_amplified", {{"theta", va.theta}, {"mu", va.mu}, {"sigma", va.sigma}}},
            {"garch", {{"omega", gp.omega}, {"alpha", gp.alpha}, {"beta", gp.beta}, {"loglik", g.garch.loglik}}},
            {"garch_amplified", {{"omega", ga.omega}, {"alpha", ga.alpha}, {"beta", ga.beta}}},
            {"noise_scale", g.noise_scale}}},
          {"seed_start_row", g.seed_start},
          {"warped_rows", g.warped_rows},
          {"validation", report_json(g.report)},
          {"warnings", g.warnings}};
}

inline void write_dataset(const std::string& dir, const SyntheticDatasetSpec& spec, const GenerationResult& g) {
  std::filesystem::create_directories(dir);
  write_split(dir + "/train.artw", g.data.train);
  write_split(dir + "/val.artw", g.data.val);
  write_split(dir + "/test.artw", g.data.test);
  std::ofstream(dir + "/manifest.json") << manifest_json(spec, g).dump(2) << "\n";
}

/// Reads the three splits of a dataset directory. Row indices are
/// reconstructed from the manifest when present.
inline WindowedDataset read_dataset(const std::string& dir) {
  WindowedDataset ds{read_split(dir + "/train.artw"), read_split(dir + "/val.artw"), read_split(dir + "/test.artw")};
  std::int64_t next = 0;
  for (auto* s : {&ds.train, &ds.val, &ds.test}) {
    s->end_rows.resize(static_cast<std::size_t>(s->size()));
    for (auto& e : s->end_rows) e = next++;
  }
  std::ifstream mf(dir + "/manifest.json");
  if (mf) {
    const auto m = nlohmann::json::parse(mf);
    const char* names[] = {"train", "val", "test"};
    WindowSplit* parts[] = {&ds.train, &ds.val, &ds.test};
    for (int k = 0; k < 3; ++k) {
      const auto first = m["splits"][names[k]]["first_end_row"].get<std::int64_t>();
      for (std::size_t i = 0; i < parts[k]->end_rows.size(); ++i)
        parts[k]->end_rows[i] = first + static_cast<std::int64_t>(i);
    }
  }
  return ds;
}

}  // namespace artemis::dslob
