#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "trustbench/error.hpp"
#include "trustbench/random.hpp"
#include "trustbench/trust_metrics.hpp"

namespace trustbench {

enum class metric_kind { u_pr, u_rc, u_at };

constexpr std::string_view to_string(metric_kind m) noexcept {
  switch (m) {
    case metric_kind::u_pr: return "u_pr";
    case metric_kind::u_rc: return "u_rc";
    case metric_kind::u_at: return "u_at";
  }
  return "";
}

inline std::optional<metric_kind> parse_metric_kind(std::string_view s) {
  if (s == "u_pr") return metric_kind::u_pr;
  if (s == "u_rc") return metric_kind::u_rc;
  if (s == "u_at") return metric_kind::u_at;
  return std::nullopt;
}

inline std::optional<double> evaluate(metric_kind metric, const trust_matrix& m) {
  switch (metric) {
    case metric_kind::u_pr: return user_precision(m);
    case metric_kind::u_rc: return user_recall(m);
    case metric_kind::u_at: return appropriate_trust(m);
  }
  return std::nullopt;
}

namespace detail {

inline std::vector<trust_cell> classify_all(std::span<const trial_record> trials,
                                            const matrix_spec& spec) {
  std::vector<trust_cell> cells;
  cells.reserve(trials.size());
  for (const auto& t : trials) cells.push_back(classify_trial(t, spec));
  return cells;
}

inline trust_matrix tally(std::span<const trust_cell> cells) {
  trust_matrix m;
  for (auto c : cells) add(m, c);
  return m;
}

/// One bootstrap resample drawn from its own stream.
inline trust_matrix resample(std::span<const trust_cell> cells, std::uint64_t seed,
                             std::uint64_t index) {
  rng gen = rng::stream(seed, index);
  trust_matrix m;
  for (std::size_t i = 0; i < cells.size(); ++i) add(m, cells[gen.below(cells.size())]);
  return m;
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw error(errc::validation, "alpha must lie in (0, 1)", "alpha");
}

}  // namespace detail

struct bootstrap_options {
  std::size_t resamples = 2000;
  double alpha = 0.05;
  std::uint64_t seed = default_seed;
};

struct bootstrap_interval {
  double low = 0.0;
  double high = 0.0;
  std::size_t n_defined = 0;
  std::size_t n_undefined = 0;
};

/// Percentile bootstrap over trials. Resamples whose metric is undefined are
/// skipped and counted.
inline bootstrap_interval bootstrap_ci(std::span<const trial_record> trials,
                                       const matrix_spec& spec, metric_kind metric,
                                       const bootstrap_options& opt = {}) {
  if (trials.empty()) throw error(errc::empty_input, "no trials to resample");
  if (opt.resamples < 100)
    throw error(errc::too_few_resamples, "at least 100 resamples required", "resamples");
  detail::check_alpha(opt.alpha);

  const auto cells = detail::classify_all(trials, spec);
  std::vector<double> values;
  values.reserve(opt.resamples);
  bootstrap_interval out;
  for (std::size_t b = 0; b < opt.resamples; ++b) {
    if (const auto v = evaluate(metric, detail::resample(cells, opt.seed, b))) {
      values.push_back(*v);
    } else {
      ++out.n_undefined;
    }
  }
  if (values.empty())
    throw error(errc::undefined_metric, "metric undefined on every resample",
                std::string(to_string(metric)));
  std::sort(values.begin(), values.end());
  out.n_defined = values.size();
  out.low = detail::quantile_sorted(values, opt.alpha / 2.0);
  out.high = detail::quantile_sorted(values, 1.0 - opt.alpha / 2.0);
  return out;
}

struct comparison_options {
  std::size_t permutations = 10000;
  std::size_t bootstrap_resamples = 2000;
  double alpha = 0.05;
  std::uint64_t seed = default_seed;
};

struct comparison_result {
  std::string metric_name;
  double value_baseline = 0.0;
  double value_explained = 0.0;
  double difference = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_permutations = 0;
  std::size_t n_bootstrap = 0;
  std::uint64_t seed = 0;
  bool operator==(const comparison_result&) const = default;
};

/// Two-sided trial-level permutation test of metric(explained) -
/// metric(baseline), with p = (1 + #{|perm| >= |obs|}) / (1 + n_perm), plus a
/// percentile bootstrap interval for the difference (phases resampled
/// independently).
///
/// Permuted splits where the metric is undefined count as at least as
/// extreme as the observation. Which phase receives the leading block of a
/// shuffled pool is decided by comparing the phases' (size, cell counts), so
/// swapping the arguments negates every statistic and leaves p unchanged.
inline comparison_result permutation_test(std::span<const trial_record> baseline,
                                          std::span<const trial_record> explained,
                                          const matrix_spec& spec, metric_kind metric,
                                          const comparison_options& opt = {}) {
  if (baseline.empty()) throw error(errc::empty_phase, "baseline phase has no trials", "baseline");
  if (explained.empty())
    throw error(errc::empty_phase, "explained phase has no trials", "explained");
  if (opt.permutations == 0)
    throw error(errc::too_few_permutations, "at least one permutation required", "n_perm");
  if (opt.bootstrap_resamples < 100)
    throw error(errc::too_few_resamples, "at least 100 resamples required", "resamples");
  detail::check_alpha(opt.alpha);

  const auto cells_b = detail::classify_all(baseline, spec);
  const auto cells_e = detail::classify_all(explained, spec);
  const trust_matrix mb = detail::tally(cells_b);
  const trust_matrix me = detail::tally(cells_e);
  const auto vb = evaluate(metric, mb);
  const auto ve = evaluate(metric, me);
  const std::string name(to_string(metric));
  if (!vb) throw error(errc::undefined_metric, "metric undefined on the baseline phase", name);
  if (!ve) throw error(errc::undefined_metric, "metric undefined on the explained phase", name);

  comparison_result r;
  r.metric_name = name;
  r.value_baseline = *vb;
  r.value_explained = *ve;
  r.difference = *ve - *vb;
  r.n_permutations = opt.permutations;
  r.n_bootstrap = opt.bootstrap_resamples;
  r.seed = opt.seed;

  // Pool in a canonical order so the pool is a function of the multiset only.
  std::vector<trust_cell> pool(cells_b);
  pool.insert(pool.end(), cells_e.begin(), cells_e.end());
  std::sort(pool.begin(), pool.end());
  auto key = [](const trust_matrix& m) { return std::tuple(m.total(), m.tt, m.tm, m.ft, m.fm); };
  const bool baseline_leads = key(mb) <= key(me);
  const std::size_t lead = baseline_leads ? cells_b.size() : cells_e.size();

  const double observed = std::abs(r.difference);
  const double slack = 1e-12 * std::max(1.0, observed);
  std::size_t extreme = 0;
  std::vector<trust_cell> shuffled(pool.size());
  for (std::size_t i = 0; i < opt.permutations; ++i) {
    std::copy(pool.begin(), pool.end(), shuffled.begin());
    rng gen = rng::stream(opt.seed, i);
    shuffle(std::span<trust_cell>(shuffled), gen);
    const auto head = detail::tally(std::span<const trust_cell>(shuffled).first(lead));
    const auto tail = detail::tally(std::span<const trust_cell>(shuffled).subspan(lead));
    const auto a = evaluate(metric, head);
    const auto b = evaluate(metric, tail);
    if (!a || !b || std::abs(*b - *a) >= observed - slack) ++extreme;
  }
  r.p_value = static_cast<double>(1 + extreme) / static_cast<double>(1 + opt.permutations);

  // Bootstrap of the difference; streams offset so they never reuse the
  // permutation streams.
  std::vector<double> diffs;
  diffs.reserve(opt.bootstrap_resamples);
  const std::uint64_t offset = opt.permutations;
  for (std::size_t b = 0; b < opt.bootstrap_resamples; ++b) {
    const auto xb = evaluate(metric, detail::resample(cells_b, opt.seed, offset + 2 * b));
    const auto xe = evaluate(metric, detail::resample(cells_e, opt.seed, offset + 2 * b + 1));
    if (xb && xe) diffs.push_back(*xe - *xb);
  }
  if (diffs.empty()) {
    r.ci_low = r.ci_high = r.difference;
  } else {
    std::sort(diffs.begin(), diffs.end());
    r.ci_low = detail::quantile_sorted(diffs, opt.alpha / 2.0);
    r.ci_high = detail::quantile_sorted(diffs, 1.0 - opt.alpha / 2.0);
  }
  return r;
}

enum class report_format { text, structured };

inline std::optional<report_format> parse_report_format(std::string_view s) {
  if (s == "text") return report_format::text;
  if (s == "structured") return report_format::structured;
  return std::nullopt;
}

/// Two-decimal display value, "n/a" when undefined.
inline std::string display(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

namespace detail {

inline nlohmann::ordered_json optional_json(std::optional<double> v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <typename Json>
std::optional<double> optional_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.template get<double>();
}

inline std::string beta_label(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", beta);
  return buf;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const metrics_report& r) {
  nlohmann::ordered_json j;
  j["n_trials"] = r.n_trials;
  j["matrix"] = {{"tt", r.matrix.tt}, {"tm", r.matrix.tm}, {"ft", r.matrix.ft}, {"fm", r.matrix.fm}};
  j["u_pr"] = detail::optional_json(r.u_pr);
  j["u_rc"] = detail::optional_json(r.u_rc);
  j["u_at"] = detail::optional_json(r.u_at);
  auto fb = nlohmann::ordered_json::array();
  for (const auto& [beta, value] : r.f_beta)
    fb.push_back({{"beta", beta}, {"value", detail::optional_json(value)}});
  j["f_beta"] = std::move(fb);
  if (r.rates) {
    j["rates"] = {{"appropriate", r.rates->appropriate},
                  {"overtrust", detail::optional_json(r.rates->overtrust)},
                  {"undertrust", detail::optional_json(r.rates->undertrust)}};
  } else {
    j["rates"] = nullptr;
  }
  return j;
}

template <typename Json>
metrics_report metrics_report_from_json(const Json& j) {
  metrics_report r;
  r.n_trials = j.at("n_trials").template get<std::size_t>();
  const auto& m = j.at("matrix");
  r.matrix = {m.at("tt").template get<std::uint64_t>(), m.at("tm").template get<std::uint64_t>(),
              m.at("ft").template get<std::uint64_t>(), m.at("fm").template get<std::uint64_t>()};
  r.u_pr = detail::optional_from_json(j.at("u_pr"));
  r.u_rc = detail::optional_from_json(j.at("u_rc"));
  r.u_at = detail::optional_from_json(j.at("u_at"));
  for (const auto& e : j.at("f_beta"))
    r.f_beta[e.at("beta").template get<double>()] = detail::optional_from_json(e.at("value"));
  if (!j.at("rates").is_null()) {
    const auto& rt = j.at("rates");
    r.rates = trust_rates{rt.at("appropriate").template get<double>(),
                          detail::optional_from_json(rt.at("overtrust")),
                          detail::optional_from_json(rt.at("undertrust"))};
  }
  return r;
}

inline nlohmann::ordered_json to_json(const comparison_result& r) {
  nlohmann::ordered_json j;
  j["metric_name"] = r.metric_name;
  j["value_baseline"] = r.value_baseline;
  j["value_explained"] = r.value_explained;
  j["difference"] = r.difference;
  j["p_value"] = r.p_value;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["n_permutations"] = r.n_permutations;
  j["n_bootstrap"] = r.n_bootstrap;
  j["seed"] = r.seed;
  return j;
}

template <typename Json>
comparison_result comparison_result_from_json(const Json& j) {
  comparison_result r;
  r.metric_name = j.at("metric_name").template get<std::string>();
  r.value_baseline = j.at("value_baseline").template get<double>();
  r.value_explained = j.at("value_explained").template get<double>();
  r.difference = j.at("difference").template get<double>();
  r.p_value = j.at("p_value").template get<double>();
  r.ci_low = j.at("ci_low").template get<double>();
  r.ci_high = j.at("ci_high").template get<double>();
  r.n_permutations = j.at("n_permutations").template get<std::size_t>();
  r.n_bootstrap = j.at("n_bootstrap").template get<std::size_t>();
  r.seed = j.at("seed").template get<std::uint64_t>();
  return r;
}

inline std::string render_report(const metrics_report& r, report_format format) {
  if (format == report_format::structured) return to_json(r).dump(2) + "\n";
  std::string out;
  auto line = [&out](const std::string& k, const std::string& v) { out += k + ": " + v + "\n"; };
  line("n_trials", std::to_string(r.n_trials));
  line("Tt", std::to_string(r.matrix.tt));
  line("Tm", std::to_string(r.matrix.tm));
  line("Ft", std::to_string(r.matrix.ft));
  line("Fm", std::to_string(r.matrix.fm));
  line("U_pr", display(r.u_pr));
  line("U_rc", display(r.u_rc));
  line("U_at", display(r.u_at));
  for (const auto& [beta, value] : r.f_beta) line("F_" + detail::beta_label(beta), display(value));
  line("appropriate_rate", display(r.rates ? std::optional(r.rates->appropriate) : std::nullopt));
  line("overtrust_rate", display(r.rates ? r.rates->overtrust : std::nullopt));
  line("undertrust_rate", display(r.rates ? r.rates->undertrust : std::nullopt));
  return out;
}

inline std::string render_report(const comparison_result& r, report_format format) {
  if (format == report_format::structured) return to_json(r).dump(2) + "\n";
  std::string out;
  auto line = [&out](const std::string& k, const std::string& v) { out += k + ": " + v + "\n"; };
  line("metric", r.metric_name);
  line("baseline", display(r.value_baseline));
  line("explained", display(r.value_explained));
  line("difference", display(r.difference));
  char p[32];
  std::snprintf(p, sizeof p, "%.4f", r.p_value);
  line("p_value", p);
  line("ci", "[" + display(r.ci_low) + ", " + display(r.ci_high) + "]");
  line("n_permutations", std::to_string(r.n_permutations));
  line("n_bootstrap", std::to_string(r.n_bootstrap));
  line("seed", std::to_string(r.seed));
  return out;
}

}  // namespace trustbench
