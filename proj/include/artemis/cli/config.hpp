#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/dslob/generate.hpp"
#include "artemis/train/trainer.hpp"

namespace artemis::cli {

struct PredictOptions {
  double alpha = 0.1;
  long adaptive = 0;  // rolling window W; 0 uses the split quantile
  std::string split = "test";
};

struct AllocateOptions {
  double gamma = 5.0;
  double tolerance = 1e-12;
  int max_iter = 100000;
  long row = -1;  // row of each predictions file; -1 is the last
};

struct Settings {
  dslob::SyntheticDatasetSpec dslob;
  train::TrainConfig train;
  PredictOptions predict;
  AllocateOptions allocate;
  long ablate_seeds = 1;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ContractViolation("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ContractViolation("config: '" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

/// Dotted-key view over `Settings`. Every key has a getter and a setter.
class Registry {
 public:
  explicit Registry(Settings& s) {
    auto& d = s.dslob;
    auto& t = s.train;
    num("dslob.seed", d.seed);
    num("dslob.n_steps", d.n_steps);
    num("dslob.window_len", d.window_len);
    num("dslob.horizon", d.horizon);
    num("dslob.warp.gp_mean", d.warp.gp_mean);
    num("dslob.warp.gp_var", d.warp.gp_var);
    num("dslob.warp.length_scale", d.warp.length_scale);
    num("dslob.snr_ratio", d.snr_ratio);
    flag("dslob.variance_target", d.variance_target);
    text("dslob.seed_csv", d.seed_csv);
    num("dslob.seed_min_rows", d.seed_min_rows);
    auto& m = d.seed_model;
    num("dslob.seed_model.p0", m.p0);
    num("dslob.seed_model.vasicek.theta", m.vasicek.theta);
    num("dslob.seed_model.vasicek.mu", m.vasicek.mu);
    num("dslob.seed_model.vasicek.sigma", m.vasicek.sigma);
    num("dslob.seed_model.garch.omega", m.garch.omega);
    num("dslob.seed_model.garch.alpha", m.garch.alpha);
    num("dslob.seed_model.garch.beta", m.garch.beta);
    num("dslob.seed_model.tick", m.tick);
    num("dslob.seed_model.spread_log_sd", m.spread_log_sd);
    num("dslob.seed_model.spread_phi", m.spread_phi);
    num("dslob.seed_model.size_base", m.size_base);
    num("dslob.seed_model.size_log_sd", m.size_log_sd);
    num("dslob.seed_model.size_phi", m.size_phi);
    num("dslob.seed_model.measurement_noise", m.measurement_noise);
    num("dslob.thresholds.ks_p", d.thresholds.ks_p);
    num("dslob.thresholds.acf_lags", d.thresholds.acf_lags);
    num("dslob.thresholds.corr_mean_absdiff", d.thresholds.corr_mean_absdiff);
    num("dslob.thresholds.tail_quantile", d.thresholds.tail_quantile);
    num("dslob.thresholds.tail_rel_err", d.thresholds.tail_rel_err);

    num("train.epochs", t.epochs);
    num("train.distill_epochs", t.distill_epochs);
    num("train.batch", t.batch);
    num("train.lr", t.lr);
    num("train.distill_lr", t.distill_lr);
    num("train.sde_steps", t.sde_steps);
    num("train.dz", t.dz);
    num("train.hidden", t.hidden);
    num("train.pole_pairs", t.pole_pairs);
    num("train.real_poles", t.real_poles);
    num("train.fourier", t.fourier);
    num("train.horizon", t.horizon);
    num("train.seed", t.seed);
    num("train.early_stop_patience", t.early_stop_patience);
    num("train.plateau_factor", t.plateau_factor);
    num("train.plateau_patience", t.plateau_patience);
    flag("train.rebalance", t.rebalance);
    flag("train.gumbel", t.gumbel);
    num("train.gumbel_tau", t.gumbel_tau);
    num("train.expression_threshold", t.expression_threshold);
    num("train.alpha", t.alpha);
    num("train.threads", t.threads);
    entries_["train.variant"] = {[&t] { return train::variant_name(t.variant); },
                                 [&t](const std::string& v) { t.variant = train::parse_variant(v); }};
    num("physics.r", t.physics.r);
    num("physics.kappa", t.physics.kappa);
    num("physics.n_coll", t.physics.n_coll);
    num("loss.lambda1", t.weights.lambda1);
    num("loss.lambda2", t.weights.lambda2);
    num("loss.lambda3", t.weights.lambda3);
    num("loss.lambda4", t.weights.lambda4);

    num("predict.alpha", s.predict.alpha);
    num("predict.adaptive", s.predict.adaptive);
    text("predict.split", s.predict.split);
    num("allocate.gamma", s.allocate.gamma);
    num("allocate.tolerance", s.allocate.tolerance);
    num("allocate.max_iter", s.allocate.max_iter);
    num("allocate.row", s.allocate.row);
    num("ablate.seeds", s.ablate_seeds);
  }

  void set(const std::string& key, const std::string& value) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ContractViolation("config: unknown key '" + key + "'");
    it->second.set(value);
  }
  std::string get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ContractViolation("config: unknown key '" + key + "'");
    return it->second.get();
  }
  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [name, e] : entries_) k.push_back(name);
    return k;
  }

  /// "key = value" per line; '#' starts a comment.
  void load_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ContractViolation(origin + ":" + std::to_string(no) + ": expected 'key = value'");
      set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
  }
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path);
  }
  /// "key=value" from the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ContractViolation("--set expects key=value, got '" + kv + "'");
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  /// Effective configuration, sorted by key, optionally filtered by prefix.
  /// Thread count is left out: it never changes results.
  std::string echo(const std::vector<std::string>& prefixes = {}) const {
    std::string out;
    for (const auto& [name, e] : entries_) {
      bool keep = prefixes.empty();
      for (const auto& p : prefixes) keep = keep || name.starts_with(p);
      if (name == "train.threads") keep = false;
      if (keep) out += name + " = " + e.get() + "\n";
    }
    return out;
  }

 private:
  struct Entry {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
  };
  std::map<std::string, Entry> entries_;

  template <class T>
  void num(const std::string& key, T& field) {
    entries_[key] = {[&field] {
                       if constexpr (std::is_floating_point_v<T>)
                         return format_double(field);
                       else
                         return std::to_string(field);
                     },
                     [&field, key](const std::string& v) { field = detail::parse_number<T>(key, v); }};
  }
  void flag(const std::string& key, bool& field) {
    entries_[key] = {[&field] { return std::string(field ? "true" : "false"); },
                     [&field, key](const std::string& v) { field = detail::parse_bool(key, v); }};
  }
  void text(const std::string& key, std::string& field) {
    entries_[key] = {[&field] { return field; }, [&field](const std::string& v) { field = v; }};
  }
};

}  // namespace artemis::cli
