#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/numcore/adam.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::symbolic {

using numcore::Mat;
using numcore::Vec;

enum class Kind { Last, Ma, Diff, Ratio, Var };

inline constexpr double kRatioGuard = 1e-8;

struct Descriptor {
  Kind kind = Kind::Last;
  Eigen::Index channel = 0;
  Eigen::Index param = 0;  // window for ma, lag for diff

  bool operator==(const Descriptor&) const = default;
};

inline std::string to_string(const Descriptor& d) {
  const std::string ch = "ch=" + std::to_string(d.channel);
  switch (d.kind) {
    case Kind::Last: return "last(" + ch + ")";
    case Kind::Ma: return "ma(" + ch + ",w=" + std::to_string(d.param) + ")";
    case Kind::Diff: return "diff(" + ch + ",lag=" + std::to_string(d.param) + ")";
    case Kind::Ratio: return "ratio(" + ch + ")";
    case Kind::Var: return "var(" + ch + ")";
  }
  return {};
}

namespace detail {

inline Eigen::Index parse_index(std::string_view s, std::string_view what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && ptr == s.data() + s.size() && v >= 0,
          "symbolic: bad " + std::string(what) + " '" + std::string(s) + "'");
  return static_cast<Eigen::Index>(v);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Descriptor parse_descriptor(std::string_view text) {
  text = detail::trim(text);
  const auto open = text.find('(');
  require(open != std::string_view::npos && text.back() == ')', "symbolic: malformed descriptor '" +
                                                                     std::string(text) + "'");
  const std::string_view name = text.substr(0, open);
  std::string_view args = text.substr(open + 1, text.size() - open - 2);
  Descriptor d;
  std::string_view param_key;
  if (name == "last") d.kind = Kind::Last;
  else if (name == "ma") d.kind = Kind::Ma, param_key = "w";
  else if (name == "diff") d.kind = Kind::Diff, param_key = "lag";
  else if (name == "ratio") d.kind = Kind::Ratio;
  else if (name == "var") d.kind = Kind::Var;
  else throw ContractViolation("symbolic: unknown basis kind '" + std::string(name) + "'");

  bool have_ch = false, have_param = false;
  while (!args.empty()) {
    const auto comma = args.find(',');
    const std::string_view kv = args.substr(0, comma);
    args = comma == std::string_view::npos ? std::string_view{} : args.substr(comma + 1);
    const auto eq = kv.find('=');
    require(eq != std::string_view::npos, "symbolic: expected key=value in '" + std::string(text) + "'");
    const std::string_view key = kv.substr(0, eq);
    const std::string_view val = kv.substr(eq + 1);
    if (key == "ch" && !have_ch) {
      d.channel = detail::parse_index(val, "channel");
      have_ch = true;
    } else if (!param_key.empty() && key == param_key && !have_param) {
      d.param = detail::parse_index(val, key);
      have_param = true;
    } else {
      throw ContractViolation("symbolic: unexpected key '" + std::string(key) + "' in '" + std::string(text) + "'");
    }
  }
  require(have_ch && (param_key.empty() || have_param), "symbolic: missing argument in '" + std::string(text) + "'");
  require(param_key.empty() || d.param >= 1, "symbolic: window/lag must be positive");
  return d;
}

struct LibrarySpec {
  std::vector<Eigen::Index> ma_windows{5, 10, 0};  // 0 stands for the full window length
  std::vector<Eigen::Index> diff_lags{1};
};

struct BasisLibrary {
  Eigen::Index L = 0;
  Eigen::Index dx = 0;
  std::vector<Descriptor> entries;

  Eigen::Index size() const { return static_cast<Eigen::Index>(entries.size()); }
  std::optional<Eigen::Index> find(const Descriptor& d) const {
    const auto it = std::find(entries.begin(), entries.end(), d);
    if (it == entries.end()) return std::nullopt;
    return it - entries.begin();
  }
};

/// Per channel: last, ma over each window (clamped to L), diff at each lag,
/// ratio last/first, sample variance. Duplicates are dropped.
inline BasisLibrary build_library(Eigen::Index dx, Eigen::Index L, const LibrarySpec& spec = {}) {
  require(L >= 2, "build_library: window length must be at least 2");
  require(dx >= 1, "build_library: need at least one channel");
  BasisLibrary lib{L, dx, {}};
  auto add = [&](Descriptor d) {
    if (!lib.find(d)) lib.entries.push_back(d);
  };
  for (Eigen::Index c = 0; c < dx; ++c) {
    add({Kind::Last, c, 0});
    for (Eigen::Index w : spec.ma_windows) add({Kind::Ma, c, w <= 0 ? L : std::min(w, L)});
    for (Eigen::Index lag : spec.diff_lags) {
      require(lag >= 1 && lag < L, "build_library: diff lag must lie in [1, L)");
      add({Kind::Diff, c, lag});
    }
    add({Kind::Ratio, c, 0});
    add({Kind::Var, c, 0});
  }
  return lib;
}

/// Evaluates one basis function on a window (rows = time, oldest first).
inline double basis_eval(const Descriptor& d, const Mat& window) {
  const Eigen::Index L = window.rows();
  require(d.channel < window.cols(), "basis_eval: channel out of range");
  const auto x = window.col(d.channel);
  switch (d.kind) {
    case Kind::Last: return x[L - 1];
    case Kind::Ma: {
      require(d.param >= 1 && d.param <= L, "basis_eval: moving-average window exceeds L");
      return x.tail(d.param).mean();
    }
    case Kind::Diff: {
      require(d.param >= 1 && d.param < L, "basis_eval: lag exceeds window");
      return x[L - 1] - x[L - 1 - d.param];
    }
    case Kind::Ratio: return std::abs(x[0]) > kRatioGuard ? x[L - 1] / x[0] : 1.0;
    case Kind::Var: {
      const double m = x.mean();
      return (x.array() - m).square().sum() / static_cast<double>(L - 1);
    }
  }
  return 0.0;
}

inline Vec library_features(const BasisLibrary& lib, const Mat& window) {
  require(window.rows() == lib.L && window.cols() == lib.dx, "library_features: window shape mismatch");
  Vec f(lib.size());
  for (Eigen::Index k = 0; k < lib.size(); ++k) f[k] = basis_eval(lib.entries[static_cast<std::size_t>(k)], window);
  return f;
}

/// Candidate parameterizations of one basis function, e.g. the moving-average
/// windows of a channel. Library elements not in any group are used directly.
struct SelectionGroup {
  std::vector<Eigen::Index> members;
  Vec logits;  // log alpha_k
};

struct SymbolicHead {
  Vec weights;  // K; for grouped elements the group weight lives at the first member
  double l1_weight = 0.0;
  std::vector<SelectionGroup> groups;
  double tau = 1.0;

  bool selection() const { return !groups.empty(); }

  static SymbolicHead zeros(Eigen::Index k, double l1 = 0.0) { return {Vec::Zero(k), l1, {}, 1.0}; }
};

/// p_k = softmax((log alpha_k + g_k) / tau), computed with a max shift.
inline Vec gumbel_softmax(const Vec& logits, const Vec& gumbels, double tau) {
  require(tau > 0.0, "gumbel_softmax: temperature must be positive");
  require(logits.size() == gumbels.size() && logits.size() >= 1, "gumbel_softmax: size mismatch");
  const Vec s = (logits + gumbels) / tau;
  const Vec e = (s.array() - s.maxCoeff()).exp();
  return e / e.sum();
}

/// Groups the moving-average candidates of every channel.
inline std::vector<SelectionGroup> moving_average_groups(const BasisLibrary& lib) {
  std::vector<SelectionGroup> groups;
  for (Eigen::Index c = 0; c < lib.dx; ++c) {
    SelectionGroup g;
    for (Eigen::Index k = 0; k < lib.size(); ++k) {
      const auto& d = lib.entries[static_cast<std::size_t>(k)];
      if (d.kind == Kind::Ma && d.channel == c) g.members.push_back(k);
    }
    if (g.members.size() >= 2) {
      g.logits = Vec::Zero(static_cast<Eigen::Index>(g.members.size()));
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

/// Coefficient on each library element: w_k, or w_group * p_k inside a group.
/// `gumbels` holds one noise vector per group (empty means zero noise).
inline Vec effective_weights(const SymbolicHead& head, const std::vector<Vec>& gumbels = {}) {
  Vec c = head.weights;
  for (std::size_t g = 0; g < head.groups.size(); ++g) {
    const auto& grp = head.groups[g];
    const Vec noise = g < gumbels.size() ? gumbels[g] : Vec::Zero(grp.logits.size());
    const Vec p = gumbel_softmax(grp.logits, noise, head.tau);
    const double w = head.weights[grp.members.front()];
    for (std::size_t i = 0; i < grp.members.size(); ++i) c[grp.members[i]] = w * p[static_cast<Eigen::Index>(i)];
  }
  return c;
}

inline double symbolic_predict(const SymbolicHead& head, const BasisLibrary& lib, const Mat& window,
                               const std::vector<Vec>& gumbels = {}) {
  require(head.weights.size() == lib.size(), "symbolic_predict: weight count differs from library size");
  return effective_weights(head, gumbels).dot(library_features(lib, window));
}

struct Gumbels {
  /// Gumbel(0, 1) draws for every group at one (epoch, step).
  static std::vector<Vec> draw(const SymbolicHead& head, const CounterRng& rng, std::uint64_t epoch,
                               std::uint64_t step) {
    std::vector<Vec> out;
    for (std::size_t g = 0; g < head.groups.size(); ++g) {
      Vec v(head.groups[g].logits.size());
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = rng.gumbel(stream_id(streams::kGumbel, epoch, step), g * 1024 + static_cast<std::uint64_t>(i));
      out.push_back(v);
    }
    return out;
  }
};

struct DistillState {
  numcore::AdamState adam;
  explicit DistillState(const SymbolicHead& head, numcore::AdamConfig cfg = {})
      : adam(parameter_blocks(head), cfg) {}

  static std::vector<Mat> parameter_blocks(const SymbolicHead& head) {
    std::vector<Mat> blocks{head.weights};
    for (const auto& g : head.groups) blocks.push_back(g.logits);
    return blocks;
  }
};

/// Mean squared teacher gap plus l1 penalty for a feature batch (rows = samples).
inline double distill_loss(const SymbolicHead& head, const Mat& features, const Vec& teacher,
                           const std::vector<Vec>& gumbels = {}) {
  require(features.rows() == teacher.size() && features.rows() >= 1, "distill: batch size mismatch");
  const Vec pred = features * effective_weights(head, gumbels);
  return (pred - teacher).squaredNorm() / static_cast<double>(teacher.size()) + head.l1_weight * head.weights.lpNorm<1>();
}

/// Gradient blocks in `DistillState::parameter_blocks` order. The l1
/// subgradient at zero is taken as zero.
inline std::vector<Mat> distill_gradients(const SymbolicHead& head, const Mat& features, const Vec& teacher,
                                          const std::vector<Vec>& gumbels = {}) {
  const double n = static_cast<double>(teacher.size());
  const Vec resid = features * effective_weights(head, gumbels) - teacher;
  const Vec g_coef = 2.0 / n * (features.transpose() * resid);

  Vec g_w = g_coef;
  std::vector<Mat> grads{Mat()};
  for (std::size_t g = 0; g < head.groups.size(); ++g) {
    const auto& grp = head.groups[g];
    const Vec noise = g < gumbels.size() ? gumbels[g] : Vec::Zero(grp.logits.size());
    const Vec p = gumbel_softmax(grp.logits, noise, head.tau);
    const double w = head.weights[grp.members.front()];
    Vec dl_dp(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) dl_dp[i] = g_coef[grp.members[static_cast<std::size_t>(i)]];
    for (auto m : grp.members) g_w[m] = 0.0;
    g_w[grp.members.front()] = dl_dp.dot(p);
    // dp/dlogit = (diag(p) - p p^T) / tau
    grads.push_back(w / head.tau * (p.cwiseProduct(dl_dp) - p * p.dot(dl_dp)));
  }
  g_w += head.l1_weight * head.weights.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  grads[0] = g_w;
  return grads;
}

/// One Adam step on the distillation loss; returns the loss before the step.
inline double distill_step(SymbolicHead& head, DistillState& state, const Mat& features, const Vec& teacher,
                           const std::vector<Vec>& gumbels = {}) {
  const double loss = distill_loss(head, features, teacher, gumbels);
  std::vector<Mat> params = DistillState::parameter_blocks(head);
  numcore::adam_step(state.adam, params, distill_gradients(head, features, teacher, gumbels));
  head.weights = params[0];
  for (std::size_t g = 0; g < head.groups.size(); ++g) head.groups[g].logits = params[g + 1];
  return loss;
}

// ---------------------------------------------------------------------------
// Expression grammar:
//   expr := "ŷ = 0" | "ŷ = " term (" + " term)*
//   term := weight "·" desc

inline constexpr std::string_view kExprPrefix = "ŷ = ";
inline constexpr std::string_view kTimes = "·";

struct Term {
  double weight = 0.0;
  Descriptor desc;
};

inline std::string format_weight(double w) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.6g", w);
  return buf;
}

inline std::vector<Term> surviving_terms(const Vec& coef, const BasisLibrary& lib, double threshold) {
  std::vector<Term> terms;
  for (Eigen::Index k = 0; k < coef.size(); ++k)
    if (std::abs(coef[k]) > threshold) terms.push_back({coef[k], lib.entries[static_cast<std::size_t>(k)]});
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return std::abs(a.weight) > std::abs(b.weight); });
  return terms;
}

inline std::string format_expression(const std::vector<Term>& terms) {
  std::string out(kExprPrefix);
  if (terms.empty()) return out + "0";
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out += " + ";
    out += format_weight(terms[i].weight);
    out += kTimes;
    out += to_string(terms[i].desc);
  }
  return out;
}

inline std::string extract_expression(const SymbolicHead& head, const BasisLibrary& lib, double threshold = 1e-3) {
  return format_expression(surviving_terms(effective_weights(head), lib, threshold));
}

inline std::vector<Term> parse_expression(std::string_view text) {
  require(text.substr(0, kExprPrefix.size()) == kExprPrefix, "parse_expression: missing 'ŷ = ' prefix");
  text.remove_prefix(kExprPrefix.size());
  std::vector<Term> terms;
  if (text == "0") return terms;
  while (true) {
    const auto sep = text.find(" + ");
    const std::string_view term = text.substr(0, sep);
    const auto dot = term.find(kTimes);
    require(dot != std::string_view::npos, "parse_expression: term without '·' in '" + std::string(term) + "'");
    const std::string_view w = term.substr(0, dot);
    Term t;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), t.weight);
    require(ec == std::errc{} && ptr == w.data() + w.size(), "parse_expression: bad weight '" + std::string(w) + "'");
    t.desc = parse_descriptor(term.substr(dot + kTimes.size()));
    terms.push_back(t);
    if (sep == std::string_view::npos) break;
    text.remove_prefix(sep + 3);
  }
  return terms;
}

inline double evaluate_terms(const std::vector<Term>& terms, const Mat& window) {
  double acc = 0.0;
  for (const auto& t : terms) acc += t.weight * basis_eval(t.desc, window);
  return acc;
}

}  // namespace artemis::symbolic
