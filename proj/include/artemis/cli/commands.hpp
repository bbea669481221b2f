#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "artemis/cli/config.hpp"
#include "artemis/conformal.hpp"
#include "artemis/dslob/dataset_io.hpp"
#include "artemis/train/trainer.hpp"

namespace artemis::cli {

using numcore::Mat;
using numcore::Vec;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitSoftFail = 2;

/// Error tagged with the pipeline stage that raised it.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    throw StageError(name, what.starts_with(name + ": ") ? what.substr(name.size() + 2) : what);
  }
}

// RFC 4180: CRLF line ends, fields quoted only when they need it.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_field(r[i]);
    os << "\r\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
}

/// Minimal RFC 4180 reader (quoted fields, CRLF or LF).
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') field += '"', ++i;
      else if (c == '"') quoted = false;
      else field += c;
    } else if (c == '"') {
      quoted = true, any = true;
    } else if (c == ',') {
      row.push_back(field), field.clear(), any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      if (any || !field.empty()) row.push_back(field), rows.push_back(row);
      row.clear(), field.clear(), any = false;
    } else {
      field += c, any = true;
    }
  }
  if (any || !field.empty()) row.push_back(field), rows.push_back(row);
  return rows;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

inline nlohmann::json metrics_json(const train::MetricsReport& m) {
  return {{"rmse", m.rmse},
          {"rank_ic", m.rank_ic},
          {"dir_acc", m.dir_acc},
          {"weighted_r2", m.weighted_r2},
          {"n_test", m.n_test},
          {"rank_ic_undefined", m.rank_ic_undefined}};
}

inline const dslob::WindowSplit& pick_split(const dslob::WindowedDataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  if (name == "test") return ds.test;
  throw ContractViolation("unknown split '" + name + "' (train, val or test)");
}

inline std::vector<Mat> windows_of(const dslob::WindowSplit& s) {
  std::vector<Mat> w;
  w.reserve(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) w.push_back(s.window(i));
  return w;
}

// ---------------------------------------------------------------------------

inline int cmd_generate(Settings& s, Registry& reg, const std::string& out, std::ostream& log) {
  const auto g = stage("generate", [&] { return dslob::generate_dslob(s.dslob); });
  stage("write", [&] {
    dslob::write_dataset(out, s.dslob, g);
    write_text(out + "/config.txt", reg.echo({"dslob."}));
  });
  const auto& r = g.report;
  log << "windows: train " << g.data.train.size() << ", val " << g.data.val.size() << ", test " << g.data.test.size() << "\n"
      << "ks p " << r.ks_p << (r.ks_pass ? " pass" : " FAIL") << "; acf dev " << r.acf_max_dev << " band " << r.acf_band
      << (r.acf_pass ? " pass" : " FAIL") << "; corr " << r.corr_mean_absdiff << (r.corr_pass ? " pass" : " FAIL")
      << "; tail " << r.tail_rel_err << (r.tail_pass ? " pass" : " FAIL") << "\n";
  for (const auto& w : g.warnings) log << "warning: " << w << "\n";
  if (!r.pass) {
    log << "validation soft-fail: dataset written to " << out << "\n";
    return kExitSoftFail;
  }
  return kExitOk;
}

inline int cmd_train(Settings& s, Registry& reg, const std::string& data, const std::string& out, std::ostream& log) {
  const auto ds = stage("load", [&] { return dslob::read_dataset(data); });
  std::string where = "train";
  train::TrainOutcome t;
  try {
    t = train::train_model(ds, s.train, true, &where);
  } catch (const std::exception& e) {
    throw StageError(where, e.what());
  }
  stage("write", [&] {
    std::filesystem::create_directories(out);
    train::write_checkpoint(out + "/checkpoint.artp", train::to_checkpoint(t.model));
    train::write_history_csv(out + "/history.csv", t.pretrain.history);
    write_text(out + "/expression.txt", t.model.expression + "\n");
    write_json(out + "/calibration.json", {{"alpha", s.train.alpha},
                                           {"q", t.q},
                                           {"n", t.calibration_residuals.size()},
                                           {"residuals", t.calibration_residuals},
                                           {"residuals_chronological", t.calibration_chronological}});
    nlohmann::json m = {{"variant", train::variant_name(t.model.variant)},
                        {"best_epoch", t.pretrain.best_epoch},
                        {"best_val_forecast", t.pretrain.best_val},
                        {"distill_mse", t.distill.mse},
                        {"physics_evaluations", t.pretrain.physics_evals}};
    if (ds.test.size() >= 2)
      m["test"] = metrics_json(train::evaluate(t.model.predict(windows_of(ds.test), s.train.threads), ds.test.target_vec(),
                                               t.model.center()));
    write_json(out + "/metrics.json", m);
    write_text(out + "/config.txt", reg.echo({"train.", "physics.", "loss."}));
  });
  const auto terms = symbolic::parse_expression(t.model.expression).size();
  log << "best epoch " << t.pretrain.best_epoch << ", val forecast " << t.pretrain.best_val << "\n"
      << "expression: " << terms << " terms (expression.txt)\n"
      << "conformal q (alpha " << s.train.alpha << ") = " << t.q << "\n";
  return kExitOk;
}

inline int cmd_predict(Settings& s, Registry& reg, const std::string& model_dir, const std::string& data,
                       const std::string& out, std::ostream& log) {
  const auto cal = stage("load", [&] {
    if (!std::filesystem::exists(model_dir + "/calibration.json"))
      throw std::runtime_error("missing calibration file " + model_dir + "/calibration.json");
    return read_json(model_dir + "/calibration.json");
  });
  const auto model = stage("load", [&] { return train::from_checkpoint(train::read_checkpoint(model_dir + "/checkpoint.artp")); });
  const auto ds = stage("load", [&] { return dslob::read_dataset(data); });
  const auto& split = pick_split(ds, s.predict.split);
  require(split.L == model.L() && split.dx == model.dx(), "predict: dataset shape does not match the checkpoint");
  const Vec yhat = stage("predict", [&] { return model.predict(windows_of(split), s.train.threads); });
  const Vec y = split.target_vec();
  const auto sorted = cal.at("residuals").get<std::vector<double>>();
  std::vector<std::vector<std::string>> rows;
  long covered = 0;
  stage("intervals", [&] {
    const double q_split = conformal::split_quantile(sorted, s.predict.alpha);
    std::optional<conformal::AdaptiveQuantile> aq;
    if (s.predict.adaptive > 0) {
      aq.emplace(static_cast<std::size_t>(s.predict.adaptive), s.predict.alpha);
      aq->prime(cal.at("residuals_chronological").get<std::vector<double>>());
    }
    for (Eigen::Index i = 0; i < yhat.size(); ++i) {
      const double q = aq ? aq->quantile() : q_split;
      const conformal::PredictionInterval iv{yhat[i], q, s.predict.alpha};
      covered += iv.contains(y[i]);
      rows.push_back({std::to_string(i), format_double(yhat[i]), format_double(iv.lo()), format_double(iv.hi()),
                      format_double(y[i])});
      if (aq) aq->push(std::abs(y[i] - yhat[i]));
    }
  });
  stage("write", [&] {
    std::filesystem::create_directories(out);
    write_csv(out + "/predictions.csv", {"index", "y_hat", "lo", "hi", "target"}, rows);
    write_text(out + "/config.txt", reg.echo({"predict."}));
  });
  log << "coverage " << static_cast<double>(covered) / static_cast<double>(std::max<Eigen::Index>(1, yhat.size()))
      << " over " << yhat.size() << " windows (target " << 1.0 - s.predict.alpha << ")\n";
  return kExitOk;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline int cmd_ablate(Settings& s, Registry& reg, const std::string& data, const std::string& out, std::ostream& log) {
  require(s.ablate_seeds >= 1, "ablate.seeds must be at least 1");
  const auto ds = stage("load", [&] { return dslob::read_dataset(data); });
  std::vector<std::vector<train::AblationRow>> runs;
  for (long k = 0; k < s.ablate_seeds; ++k) {
    train::TrainConfig c = s.train;
    c.seed = s.train.seed + static_cast<std::uint64_t>(k);
    runs.push_back(stage("ablate", [&] { return train::run_ablation(ds, c); }));
  }
  std::vector<std::vector<std::string>> rows;
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t v = 0; v < train::kAllVariants.size(); ++v) {
    std::vector<double> rmse, ic, dir, r2;
    nlohmann::json per_seed = nlohmann::json::array();
    for (long k = 0; k < s.ablate_seeds; ++k) {
      const auto& m = runs[static_cast<std::size_t>(k)][v].metrics;
      rmse.push_back(m.rmse), ic.push_back(m.rank_ic), dir.push_back(m.dir_acc), r2.push_back(m.weighted_r2);
      auto j = metrics_json(m);
      j["seed"] = s.train.seed + static_cast<std::uint64_t>(k);
      per_seed.push_back(j);
    }
    const std::string name = train::variant_name(train::kAllVariants[v]);
    rows.push_back({name, format_double(median(rmse)), format_double(median(ic)), format_double(median(dir)),
                    format_double(median(r2))});
    table.push_back({{"variant", name},
                     {"rmse", median(rmse)},
                     {"rank_ic", median(ic)},
                     {"dir_acc", median(dir)},
                     {"weighted_r2", median(r2)},
                     {"seeds", per_seed}});
    log << name << "  rmse " << median(rmse) << "  rank_ic " << median(ic) << "  dir_acc " << median(dir) << "  wR2 "
        << median(r2) << "\n";
  }
  stage("write", [&] {
    std::filesystem::create_directories(out);
    write_csv(out + "/table.csv", {"variant", "rmse", "rank_ic", "dir_acc", "weighted_r2"}, rows);
    write_json(out + "/table.json", table);
    write_text(out + "/config.txt", reg.echo({"train.", "physics.", "loss.", "ablate."}));
  });
  return kExitOk;
}

/// Inputs: either one predictions.csv per asset (row `allocate.row`, half
/// width (hi - lo) / 2) or a single table with columns asset,y_hat,half_width.
inline int cmd_allocate(Settings& s, Registry& reg, const std::vector<std::string>& predictions,
                        const std::string& table, const std::string& out, std::ostream& log) {
  std::vector<std::string> names;
  std::vector<double> mu, hw;
  stage("load", [&] {
    require(predictions.empty() != table.empty(), "allocate: give either --predictions or --table");
    if (!table.empty()) {
      const auto rows = read_csv(table);
      require(rows.size() >= 2 && rows[0] == std::vector<std::string>{"asset", "y_hat", "half_width"},
              "allocate: table needs header asset,y_hat,half_width");
      for (std::size_t i = 1; i < rows.size(); ++i) {
        require(rows[i].size() == 3, "allocate: ragged table row " + std::to_string(i + 1));
        names.push_back(rows[i][0]);
        mu.push_back(std::stod(rows[i][1]));
        hw.push_back(std::stod(rows[i][2]));
      }
    }
    for (const auto& path : predictions) {
      const auto rows = read_csv(path);
      require(rows.size() >= 2 && rows[0].size() >= 4 && rows[0][1] == "y_hat" && rows[0][2] == "lo" && rows[0][3] == "hi",
              "allocate: " + path + " is not a predictions file");
      const long r = s.allocate.row < 0 ? static_cast<long>(rows.size()) - 1 : s.allocate.row + 1;
      require(r >= 1 && r < static_cast<long>(rows.size()), "allocate: row out of range in " + path);
      const auto& row = rows[static_cast<std::size_t>(r)];
      names.push_back(std::filesystem::path(path).parent_path().filename().string().empty()
                          ? path
                          : std::filesystem::path(path).parent_path().filename().string());
      mu.push_back(std::stod(row[1]));
      hw.push_back(0.5 * (std::stod(row[3]) - std::stod(row[2])));
    }
  });
  const auto res = stage("allocate", [&] {
    const auto p = conformal::AllocationProblem::from_intervals(Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size())),
                                                                Eigen::Map<const Vec>(hw.data(), static_cast<Eigen::Index>(hw.size())),
                                                                s.allocate.gamma);
    return conformal::kelly_allocate(p, {s.allocate.tolerance, s.allocate.max_iter});
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    rows.push_back({names[i], format_double(res.weights[static_cast<Eigen::Index>(i)])});
    log << names[i] << " " << res.weights[static_cast<Eigen::Index>(i)] << "\n";
  }
  stage("write", [&] {
    std::filesystem::create_directories(out);
    write_csv(out + "/weights.csv", {"asset", "weight"}, rows);
    write_text(out + "/config.txt", reg.echo({"allocate."}));
  });
  return kExitOk;
}

/// Integrity of a dataset directory plus the stored validation gates.
inline int cmd_validate(const std::string& data, std::ostream& log) {
  const auto ds = stage("load", [&] { return dslob::read_dataset(data); });
  const auto m = stage("load", [&] { return read_json(data + "/manifest.json"); });
  stage("integrity", [&] {
    const char* names[] = {"train", "val", "test"};
    const dslob::WindowSplit* parts[] = {&ds.train, &ds.val, &ds.test};
    for (int k = 0; k < 3; ++k) {
      const auto& s = *parts[k];
      require(s.size() == m.at("splits").at(names[k]).at("count").get<Eigen::Index>(),
              std::string("split ") + names[k] + " count differs from the manifest");
      require(s.L == m.at("shape").at("L").get<Eigen::Index>() && s.dx == m.at("shape").at("dx").get<Eigen::Index>(),
              std::string("split ") + names[k] + " shape differs from the manifest");
      for (double v : s.values) require(std::isfinite(v), std::string("non-finite value in split ") + names[k]);
      for (double v : s.targets) require(std::isfinite(v), std::string("non-finite target in split ") + names[k]);
    }
  });
  const auto& v = m.at("validation");
  log << "integrity ok; gates: ks " << v["gates"]["ks"] << ", acf " << v["gates"]["acf"] << ", corr " << v["gates"]["corr"]
      << ", tail " << v["gates"]["tail"] << "\n";
  return v.at("pass").get<bool>() ? kExitOk : kExitSoftFail;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"artemis: synthetic LOB generation, physics-regularized latent SDE training, conformal intervals"};
  app.require_subcommand(1);
  Settings s;
  Registry reg(s);
  std::string config_file;
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* c) {
    c->add_option("--config", config_file, "plain-text config, one 'key = value' per line");
    c->add_option("--set", overrides, "override a dotted key, key=value (repeatable)");
  };
  std::string out, data, model_dir, table;
  std::vector<std::string> predictions;
  double alpha = -1.0;
  long adaptive = -1;

  auto* gen = app.add_subcommand("generate", "generate a synthetic LOB dataset");
  common(gen);
  gen->add_option("--out", out, "dataset directory")->required();
  auto* tr = app.add_subcommand("train", "pretrain, distill and calibrate");
  common(tr);
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", out, "run directory")->required();
  auto* pr = app.add_subcommand("predict", "point predictions with conformal intervals");
  common(pr);
  pr->add_option("--model", model_dir, "run directory written by train")->required();
  pr->add_option("--data", data, "dataset directory")->required();
  pr->add_option("--out", out, "output directory")->required();
  pr->add_option("--alpha", alpha, "miscoverage level");
  pr->add_option("--adaptive", adaptive, "rolling residual window W (0 = split quantile)");
  auto* ab = app.add_subcommand("ablate", "train and score variants A0..A6");
  common(ab);
  ab->add_option("--data", data, "dataset directory")->required();
  ab->add_option("--out", out, "output directory")->required();
  auto* al = app.add_subcommand("allocate", "Kelly weights from interval predictions");
  common(al);
  al->add_option("--predictions", predictions, "predictions.csv per asset");
  al->add_option("--table", table, "csv with asset,y_hat,half_width");
  al->add_option("--out", out, "output directory")->required();
  auto* va = app.add_subcommand("validate", "check a dataset directory");
  va->add_option("--data", data, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    stage("config", [&] {
      if (!config_file.empty()) reg.load_file(config_file);
      for (const auto& kv : overrides) reg.apply_override(kv);
      if (alpha > 0.0) s.predict.alpha = alpha;
      if (adaptive >= 0) s.predict.adaptive = adaptive;
    });
    if (*gen) return cmd_generate(s, reg, out, log);
    if (*tr) return cmd_train(s, reg, data, out, log);
    if (*pr) return cmd_predict(s, reg, model_dir, data, out, log);
    if (*ab) return cmd_ablate(s, reg, data, out, log);
    if (*al) return cmd_allocate(s, reg, predictions, table, out, log);
    if (*va) return cmd_validate(data, log);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace artemis::cli
