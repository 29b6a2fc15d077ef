#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>

#include "trustbench/error.hpp"
#include "trustbench/random.hpp"
#include "trustbench/trial_log.hpp"

namespace trustbench {

/// A synthetic participant. Misuse is driven by p_trust_given_incorrect,
/// disuse by 1 - p_trust_given_correct.
struct synthetic_user_spec {
  double p_trust_given_correct = 0.9;
  double p_trust_given_incorrect = 0.4;
  double interval_center_bias = 0.0;
  double interval_base_width = 1.96;
  double width_uncertainty_gain = 0.0;
  std::uint64_t seed = default_seed;
};

namespace detail {

inline bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

inline std::string simulated_timestamp(std::size_t index) {
  using namespace std::chrono;
  constexpr auto base = sys_days{year{2024} / January / 1};
  return format_utc(system_clock::time_point{base + seconds{static_cast<long long>(index)}});
}

inline trial_record simulated_header(std::size_t index, task kind, phase ph) {
  trial_record r;
  r.trial_id = "t" + std::to_string(index + 1);
  r.participant_id = "sim";
  r.phase = ph;
  r.task = kind;
  r.explanation_shown = ph == phase::explained;
  r.timestamp = simulated_timestamp(index);
  return r;
}

}  // namespace detail

/// Trial i draws from its own stream rng::stream(seed, i), so any index range
/// can be generated independently with identical results.
inline trial_log simulate_classification_trials(const synthetic_user_spec& spec,
                                                double model_accuracy, std::size_t n,
                                                phase ph = phase::baseline) {
  if (!detail::is_probability(spec.p_trust_given_correct))
    throw error(errc::invalid_probability, "must lie in [0, 1]", "p_trust_given_correct");
  if (!detail::is_probability(spec.p_trust_given_incorrect))
    throw error(errc::invalid_probability, "must lie in [0, 1]", "p_trust_given_incorrect");
  if (!detail::is_probability(model_accuracy))
    throw error(errc::invalid_probability, "must lie in [0, 1]", "model_accuracy");
  if (n == 0) throw error(errc::invalid_spec, "n must be >= 1", "n");

  trial_log log;
  log.source = "simulate:classification";
  log.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng gen = rng::stream(spec.seed, i);
    const bool correct = gen.bernoulli(model_accuracy);
    const bool positive = gen.bernoulli(0.5);
    const bool trusted =
        gen.bernoulli(correct ? spec.p_trust_given_correct : spec.p_trust_given_incorrect);
    trial_record r = detail::simulated_header(i, task::classification, ph);
    const std::string truth = positive ? "pos" : "neg";
    const std::string other = positive ? "neg" : "pos";
    r.truth = truth;
    r.prediction = correct ? truth : other;
    r.user_trust = trusted;
    log.records.push_back(std::move(r));
  }
  return log;
}

/// Predictions ~ N(50, 10); truth = prediction + N(0, noise_sd); the user
/// interval is centred at prediction + bias with half-width
/// base_width * (1 + gain * difficulty), difficulty ~ U[0, 1).
inline trial_log simulate_regression_trials(const synthetic_user_spec& spec, double noise_sd,
                                            std::size_t n, phase ph = phase::baseline) {
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
    throw error(errc::invalid_spec, "noise_sd must be finite and >= 0", "noise_sd");
  if (!(spec.interval_base_width > 0.0) || !std::isfinite(spec.interval_base_width))
    throw error(errc::invalid_spec, "interval_base_width must be > 0", "interval_base_width");
  if (!(spec.width_uncertainty_gain >= 0.0) || !std::isfinite(spec.width_uncertainty_gain))
    throw error(errc::invalid_spec, "width_uncertainty_gain must be >= 0",
                "width_uncertainty_gain");
  if (!std::isfinite(spec.interval_center_bias))
    throw error(errc::invalid_spec, "interval_center_bias must be finite", "interval_center_bias");
  if (n == 0) throw error(errc::invalid_spec, "n must be >= 1", "n");

  trial_log log;
  log.source = "simulate:regression";
  log.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng gen = rng::stream(spec.seed, i);
    const double prediction = gen.normal(50.0, 10.0);
    const double truth = prediction + noise_sd * gen.normal();
    const double difficulty = gen.uniform();
    const double center = prediction + spec.interval_center_bias;
    const double half =
        spec.interval_base_width * (1.0 + spec.width_uncertainty_gain * difficulty);
    trial_record r = detail::simulated_header(i, task::regression, ph);
    r.prediction = prediction;
    r.truth = truth;
    r.interval = user_interval{center - half, center + half};
    log.records.push_back(std::move(r));
  }
  return log;
}

struct expected_user_metrics {
  double u_pr = 0.0;
  double u_rc = 0.0;
  double u_at = 0.0;
};

/// Closed-form expectations of the cell ratios for a user trusting correct
/// predictions with probability a, incorrect ones with probability b, on a
/// model of accuracy c.
inline expected_user_metrics expected_metrics(double a, double b, double c) {
  for (double p : {a, b, c})
    if (!detail::is_probability(p))
      throw error(errc::invalid_probability, "a, b and c must lie in [0, 1]");
  const double trusted = c * a + (1.0 - c) * b;
  if (trusted == 0.0 || c == 0.0 || a == 0.0)
    throw error(errc::degenerate_parameters,
                "expected precision, recall or their harmonic mean is undefined");
  expected_user_metrics m;
  m.u_pr = c * a / trusted;
  m.u_rc = a;
  m.u_at = 2.0 * m.u_pr * m.u_rc / (m.u_pr + m.u_rc);
  return m;
}

}  // namespace trustbench
