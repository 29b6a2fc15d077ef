#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "trustbench/error.hpp"
#include "trustbench/trial_log.hpp"

namespace trustbench {

/// User-as-classifier confusion matrix. Rows are model correctness, columns
/// user trust:
///
///                 trusted   mistrusted
///   correct         tt          fm
///   incorrect       ft          tm
struct trust_matrix {
  std::uint64_t tt = 0;
  std::uint64_t tm = 0;
  std::uint64_t ft = 0;
  std::uint64_t fm = 0;

  std::uint64_t total() const noexcept { return tt + tm + ft + fm; }
  bool operator==(const trust_matrix&) const = default;
};

enum class trust_cell { tt, tm, ft, fm };

inline void add(trust_matrix& m, trust_cell c) noexcept {
  switch (c) {
    case trust_cell::tt: ++m.tt; break;
    case trust_cell::tm: ++m.tm; break;
    case trust_cell::ft: ++m.ft; break;
    case trust_cell::fm: ++m.fm; break;
  }
}

constexpr trust_cell cell_for(bool model_correct, bool trusted) noexcept {
  if (model_correct) return trusted ? trust_cell::tt : trust_cell::fm;
  return trusted ? trust_cell::ft : trust_cell::tm;
}

/// How a stated regression interval becomes a trust judgment.
///
/// tolerance: the user trusts the prediction when it lies inside their
///   interval; the model is correct when |prediction - truth| <= tolerance.
/// coverage: stating an interval is the trust act; a hit is Tt, truth above
///   the interval is Ft and truth below it is Fm (Tm is never populated).
enum class interval_mapping { tolerance, coverage };

constexpr std::string_view to_string(interval_mapping m) noexcept {
  return m == interval_mapping::tolerance ? "tolerance" : "coverage";
}
inline std::optional<interval_mapping> parse_interval_mapping(std::string_view s) {
  if (s == "tolerance") return interval_mapping::tolerance;
  if (s == "coverage") return interval_mapping::coverage;
  return std::nullopt;
}

enum class regression_outcome { hit, miss_above, miss_below };

struct regression_judgment {
  regression_outcome outcome = regression_outcome::hit;
  bool trusted = false;
  bool model_correct = false;
  bool operator==(const regression_judgment&) const = default;
};

inline regression_judgment map_regression_trial(const trial_record& trial, interval_mapping mode,
                                                double tolerance = 0.0) {
  if (trial.task != task::regression)
    throw error(errc::task_mismatch, "expected a regression trial", "task");
  if (!trial.interval)
    throw error(errc::missing_interval, "regression trial has no user interval", "user_interval");
  if (mode == interval_mapping::tolerance && !(tolerance >= 0.0))
    throw error(errc::negative_tolerance, "tolerance must be >= 0", "tolerance");

  const double prediction = trial.prediction_value();
  const double truth = trial.truth_value();
  const auto [lower, upper] = *trial.interval;

  regression_judgment j;
  if (truth > upper) {
    j.outcome = regression_outcome::miss_above;
  } else if (truth < lower) {
    j.outcome = regression_outcome::miss_below;
  } else {
    j.outcome = regression_outcome::hit;
  }
  if (mode == interval_mapping::tolerance) {
    j.trusted = lower <= prediction && prediction <= upper;
    j.model_correct = std::abs(prediction - truth) <= tolerance;
  } else {
    j.trusted = true;
    j.model_correct = j.outcome == regression_outcome::hit;
  }
  return j;
}

inline trust_cell cell_for(const regression_judgment& j, interval_mapping mode) noexcept {
  if (mode == interval_mapping::coverage) {
    switch (j.outcome) {
      case regression_outcome::hit: return trust_cell::tt;
      case regression_outcome::miss_above: return trust_cell::ft;
      case regression_outcome::miss_below: return trust_cell::fm;
    }
  }
  return cell_for(j.model_correct, j.trusted);
}

/// Everything needed to turn a homogeneous list of trials into a matrix.
struct matrix_spec {
  task kind = task::classification;
  interval_mapping mode = interval_mapping::tolerance;
  double tolerance = 0.0;
};

inline trust_cell classify_trial(const trial_record& t, const matrix_spec& spec) {
  if (t.task != spec.kind)
    throw error(errc::task_mismatch,
                "trial '" + t.trial_id + "' is " + std::string(to_string(t.task)) +
                    ", expected " + std::string(to_string(spec.kind)),
                "task");
  if (spec.kind == task::classification) {
    if (!t.user_trust) throw error(errc::validation, "missing trust judgment", "user_trust");
    return cell_for(t.prediction_correct(), *t.user_trust);
  }
  return cell_for(map_regression_trial(t, spec.mode, spec.tolerance), spec.mode);
}

inline trust_matrix build_trust_matrix_classification(std::span<const trial_record> trials) {
  trust_matrix m;
  const matrix_spec spec{task::classification};
  for (const auto& t : trials) add(m, classify_trial(t, spec));
  return m;
}

inline trust_matrix build_trust_matrix_regression(std::span<const trial_record> trials,
                                                  interval_mapping mode, double tolerance = 0.0) {
  trust_matrix m;
  const matrix_spec spec{task::regression, mode, tolerance};
  for (const auto& t : trials) add(m, classify_trial(t, spec));
  return m;
}

inline trust_matrix build_trust_matrix(std::span<const trial_record> trials,
                                       const matrix_spec& spec) {
  trust_matrix m;
  for (const auto& t : trials) add(m, classify_trial(t, spec));
  return m;
}

/// Tt / (Tt + Ft); nullopt when nothing was trusted. Low values indicate misuse.
inline std::optional<double> user_precision(const trust_matrix& m) noexcept {
  const auto d = m.tt + m.ft;
  if (d == 0) return std::nullopt;
  return static_cast<double>(m.tt) / static_cast<double>(d);
}

/// Tt / (Tt + Fm); nullopt when no prediction was correct. Low values indicate disuse.
inline std::optional<double> user_recall(const trust_matrix& m) noexcept {
  const auto d = m.tt + m.fm;
  if (d == 0) return std::nullopt;
  return static_cast<double>(m.tt) / static_cast<double>(d);
}

/// Weighted harmonic mean of user precision and recall. Undefined when either
/// is undefined or both are zero.
///
/// Evaluated in count form, (1+b^2)Tt / ((1+b^2)Tt + b^2 Fm + Ft), which is
/// algebraically identical to (1+b^2)pr / (b^2 p + r) but rounds only once.
inline std::optional<double> f_beta_trust(const trust_matrix& m, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw error(errc::invalid_beta, "beta must be a finite value > 0", "beta");
  if (m.tt + m.ft == 0 || m.tt + m.fm == 0 || m.tt == 0) return std::nullopt;
  const double b2 = beta * beta;
  const double tt = static_cast<double>(m.tt);
  const double num = (1.0 + b2) * tt;
  return num / (num + b2 * static_cast<double>(m.fm) + static_cast<double>(m.ft));
}

/// Appropriate trust: the user's F1 score.
inline std::optional<double> appropriate_trust(const trust_matrix& m) {
  return f_beta_trust(m, 1.0);
}

/// Rates in the style of "how often the user follows an incorrect
/// prediction". Overtrust conditions on incorrect predictions, undertrust on
/// correct ones.
struct trust_rates {
  double appropriate = 0.0;
  std::optional<double> overtrust;
  std::optional<double> undertrust;
  bool operator==(const trust_rates&) const = default;
};

inline trust_rates compute_trust_rates(const trust_matrix& m) {
  const auto total = m.total();
  if (total == 0) throw error(errc::empty_matrix, "trust matrix has no trials");
  trust_rates r;
  r.appropriate = static_cast<double>(m.tt + m.tm) / static_cast<double>(total);
  if (m.ft + m.tm > 0)
    r.overtrust = static_cast<double>(m.ft) / static_cast<double>(m.ft + m.tm);
  if (m.tt + m.fm > 0)
    r.undertrust = static_cast<double>(m.fm) / static_cast<double>(m.tt + m.fm);
  return r;
}

struct metrics_report {
  trust_matrix matrix;
  std::optional<double> u_pr;
  std::optional<double> u_rc;
  std::optional<double> u_at;
  std::map<double, std::optional<double>> f_beta;
  std::optional<trust_rates> rates;  // absent for an empty matrix
  std::size_t n_trials = 0;
  bool operator==(const metrics_report&) const = default;
};

inline const std::vector<double>& default_betas() {
  static const std::vector<double> betas{1.0, 2.0};
  return betas;
}

inline metrics_report metrics_from_matrix(const trust_matrix& m,
                                          std::span<const double> betas = default_betas()) {
  metrics_report r;
  r.matrix = m;
  r.n_trials = m.total();
  r.u_pr = user_precision(m);
  r.u_rc = user_recall(m);
  r.u_at = appropriate_trust(m);
  for (double b : betas) r.f_beta[b] = f_beta_trust(m, b);
  if (m.total() > 0) r.rates = compute_trust_rates(m);
  return r;
}

inline metrics_report make_metrics_report(std::span<const trial_record> trials,
                                          const matrix_spec& spec,
                                          std::span<const double> betas = default_betas()) {
  return metrics_from_matrix(build_trust_matrix(trials, spec), betas);
}

}  // namespace trustbench
