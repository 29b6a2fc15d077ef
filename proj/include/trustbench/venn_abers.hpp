#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "trustbench/error.hpp"

namespace trustbench {

struct calibration_pair {
  double score = 0.0;
  int label = 0;
};

struct venn_abers_output {
  double p0 = 0.0;
  double p1 = 0.0;
  double merged = 0.0;

  double width() const noexcept { return p1 - p0; }
};

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
inline std::vector<double> pava_isotonic(std::span<const double> values,
                                         std::span<const double> weights) {
  if (values.size() != weights.size())
    throw error(errc::length_mismatch, "values and weights differ in length");
  if (values.empty()) throw error(errc::empty_input, "no values");

  struct block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<block> stack;
  stack.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) throw error(errc::nonpositive_weight, "weights must be > 0", "weights");
    stack.push_back({values[i], weights[i], 1});
    while (stack.size() > 1 && stack[stack.size() - 2].mean > stack.back().mean) {
      const block top = stack.back();
      stack.pop_back();
      block& prev = stack.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> fit;
  fit.reserve(values.size());
  for (const auto& b : stack) fit.insert(fit.end(), b.count, b.mean);
  return fit;
}

inline double merged_probability(double p0, double p1) {
  if (!(0.0 <= p0 && p0 <= p1 && p1 <= 1.0))
    throw error(errc::invalid_interval_order, "requires 0 <= p0 <= p1 <= 1");
  return p1 / (1.0 - p0 + p1);
}

namespace detail {

/// Isotonic fit at `test_score` after adding (test_score, test_label) to the
/// calibration set. Equal scores are pooled into one weighted point.
inline double venn_abers_fit_at(std::span<const calibration_pair> calibration, double test_score,
                                int test_label) {
  std::vector<calibration_pair> pts(calibration.begin(), calibration.end());
  pts.push_back({test_score, test_label});
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.score < b.score; });
  std::vector<double> means;
  std::vector<double> weights;
  std::size_t test_block = 0;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < pts.size() && pts[j].score == pts[i].score) sum += pts[j++].label;
    if (pts[i].score == test_score) test_block = means.size();
    means.push_back(sum / static_cast<double>(j - i));
    weights.push_back(static_cast<double>(j - i));
    i = j;
  }
  return pava_isotonic(means, weights)[test_block];
}

}  // namespace detail

/// Inductive Venn-Abers probability interval for the positive class.
/// Two isotonic fits per query; fine for calibration sets of a few thousand.
inline venn_abers_output venn_abers_interval(std::span<const calibration_pair> calibration,
                                             double test_score) {
  if (calibration.empty()) throw error(errc::empty_calibration, "calibration set is empty");
  bool has0 = false;
  bool has1 = false;
  for (const auto& c : calibration) {
    if (c.label != 0 && c.label != 1)
      throw error(errc::validation, "labels must be 0 or 1", "label");
    if (!std::isfinite(c.score)) throw error(errc::validation, "scores must be finite", "score");
    (c.label == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1)
    throw error(errc::single_class_calibration, "calibration needs both labels");
  if (!std::isfinite(test_score))
    throw error(errc::validation, "test score must be finite", "test_score");

  venn_abers_output out;
  out.p0 = detail::venn_abers_fit_at(calibration, test_score, 0);
  out.p1 = detail::venn_abers_fit_at(calibration, test_score, 1);
  out.merged = merged_probability(out.p0, out.p1);
  return out;
}

inline constexpr std::size_t default_reliability_bins = 10;

struct reliability_bin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
  std::size_t count = 0;
};

struct reliability_report {
  std::vector<reliability_bin> bins;  // non-empty bins only
  double ece = 0.0;
};

/// Equal-width reliability binning over [0, 1]; probability 1 falls in the
/// last bin. ECE = sum over bins of (n_b / N) |accuracy_b - confidence_b|.
inline reliability_report expected_calibration_error(std::span<const double> probs,
                                                     std::span<const int> outcomes,
                                                     std::size_t n_bins = default_reliability_bins) {
  if (probs.size() != outcomes.size())
    throw error(errc::length_mismatch, "probs and outcomes differ in length");
  if (probs.empty()) throw error(errc::empty_input, "no probabilities");
  if (n_bins == 0) throw error(errc::validation, "need at least one bin", "bins");

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<double> hits(n_bins, 0.0);
  std::vector<std::size_t> counts(n_bins, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw error(errc::invalid_probability, "probabilities must lie in [0, 1]", "probs");
    if (outcomes[i] != 0 && outcomes[i] != 1)
      throw error(errc::validation, "outcomes must be 0 or 1", "outcomes");
    const auto b = std::min(static_cast<std::size_t>(p * static_cast<double>(n_bins)), n_bins - 1);
    conf_sum[b] += p;
    hits[b] += outcomes[i];
    ++counts[b];
  }

  reliability_report r;
  const double n = static_cast<double>(probs.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0) continue;
    const double c = static_cast<double>(counts[b]);
    reliability_bin bin;
    bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    bin.mean_confidence = conf_sum[b] / c;
    bin.empirical_accuracy = hits[b] / c;
    bin.count = counts[b];
    r.ece += (c / n) * std::abs(bin.empirical_accuracy - bin.mean_confidence);
    r.bins.push_back(bin);
  }
  return r;
}

}  // namespace trustbench
