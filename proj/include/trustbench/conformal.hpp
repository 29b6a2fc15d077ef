#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "trustbench/dataset.hpp"
#include "trustbench/error.hpp"
#include "trustbench/knn.hpp"

namespace trustbench {

inline constexpr double default_beta_smoothing = 0.1;

/// Sorted calibration nonconformity scores for inductive conformal regression.
struct nonconformity_scores {
  std::vector<double> scores;  // ascending
  bool normalized = false;
  double beta_smoothing = default_beta_smoothing;
};

struct prediction_interval {
  double lower = 0.0;
  double upper = 0.0;
  double significance = 0.0;

  double width() const noexcept { return upper - lower; }
  bool contains(double y) const noexcept { return lower <= y && y <= upper; }
};

/// Scores from absolute residuals |y - y_hat|; when `difficulties` is
/// non-empty each residual is divided by (difficulty + beta).
inline nonconformity_scores scores_from_residuals(std::span<const double> residuals,
                                                  std::span<const double> difficulties = {},
                                                  double beta_smoothing = default_beta_smoothing) {
  if (residuals.empty()) throw error(errc::empty_calibration, "calibration set is empty");
  const bool normalized = !difficulties.empty();
  if (normalized && difficulties.size() != residuals.size())
    throw error(errc::length_mismatch, "one difficulty per residual required", "difficulties");
  if (normalized && !(beta_smoothing > 0.0))
    throw error(errc::invalid_spec, "beta smoothing must be > 0", "beta_smoothing");
  nonconformity_scores s;
  s.normalized = normalized;
  s.beta_smoothing = beta_smoothing;
  s.scores.reserve(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    double a = std::abs(residuals[i]);
    if (normalized) a /= difficulties[i] + beta_smoothing;
    if (!std::isfinite(a)) throw error(errc::invalid_spec, "non-finite nonconformity score");
    s.scores.push_back(a);
  }
  std::sort(s.scores.begin(), s.scores.end());
  return s;
}

inline nonconformity_scores calibrate(const knn_model& model, const dataset& calibration,
                                      bool normalized = false,
                                      double beta_smoothing = default_beta_smoothing) {
  if (calibration.rows() == 0) throw error(errc::empty_calibration, "calibration set is empty");
  std::vector<double> residuals;
  std::vector<double> difficulties;
  for (std::size_t i = 0; i < calibration.rows(); ++i) {
    const auto x = calibration.row(i);
    residuals.push_back(calibration.targets[i] - knn_predict(model, x).point);
    if (normalized) difficulties.push_back(difficulty_estimate(model, x));
  }
  return scores_from_residuals(residuals, difficulties, beta_smoothing);
}

/// Rank of the calibration score used as half-width: ceil((1-eps)(q+1)).
/// The product is nudged down by 1e-9 so exact integers are not pushed up
/// by representation error.
inline std::size_t conformal_rank(std::size_t q, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw error(errc::invalid_epsilon, "epsilon must lie in (0, 1)", "epsilon");
  const double x = (1.0 - epsilon) * static_cast<double>(q + 1);
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

/// Half-width in score units (before difficulty rescaling).
inline double conformal_half_width(const nonconformity_scores& s, double epsilon) {
  const std::size_t q = s.scores.size();
  if (q == 0) throw error(errc::empty_calibration, "calibration set is empty");
  const std::size_t rank = conformal_rank(q, epsilon);
  if (rank > q)
    throw error(errc::insufficient_calibration,
                std::to_string(q) + " calibration scores cannot support epsilon " +
                    std::to_string(epsilon) + " (rank " + std::to_string(rank) + " needed)",
                "epsilon");
  return s.scores[rank - 1];
}

/// Interval around an already-computed point prediction. `difficulty` is
/// required for normalized score sets.
inline prediction_interval interval_around(double point, const nonconformity_scores& s,
                                           double epsilon, std::optional<double> difficulty = {}) {
  double h = conformal_half_width(s, epsilon);
  if (s.normalized) {
    if (!difficulty)
      throw error(errc::invalid_spec, "normalized scores need a difficulty estimate", "difficulty");
    h *= *difficulty + s.beta_smoothing;
  }
  return {point - h, point + h, epsilon};
}

inline prediction_interval predict_interval(const knn_model& model, const nonconformity_scores& s,
                                            std::span<const double> x, double epsilon) {
  // Validate epsilon before doing any neighbour search.
  conformal_half_width(s, epsilon);
  const double point = knn_predict(model, x).point;
  std::optional<double> difficulty;
  if (s.normalized) difficulty = difficulty_estimate(model, x);
  return interval_around(point, s, epsilon, difficulty);
}

inline double empirical_coverage(std::span<const prediction_interval> intervals,
                                 std::span<const double> truths) {
  if (intervals.size() != truths.size())
    throw error(errc::length_mismatch, "intervals and truths differ in length");
  if (intervals.empty()) throw error(errc::empty_input, "no intervals");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i)
    if (intervals[i].contains(truths[i])) ++inside;
  return static_cast<double>(inside) / static_cast<double>(intervals.size());
}

}  // namespace trustbench
