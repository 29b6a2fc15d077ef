#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "trustbench/dataset.hpp"
#include "trustbench/random.hpp"
#include "trustbench/venn_abers.hpp"

namespace trustbench::testing {

/// Isotonic regression via the min-max formula:
///   fit[i] = max_{j <= i} min_{k >= i} weighted_mean(j..k).
/// O(n^3), independent of block pooling.
inline std::vector<double> isotonic_oracle(const std::vector<double>& v, const std::vector<double>& w) {
  const std::size_t n = v.size();
  std::vector<double> fit(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      double lowest = std::numeric_limits<double>::infinity();
      for (std::size_t k = i; k < n; ++k) {
        double s = 0.0, sw = 0.0;
        for (std::size_t t = j; t <= k; ++t) {
          s += v[t] * w[t];
          sw += w[t];
        }
        lowest = std::min(lowest, s / sw);
      }
      best = std::max(best, lowest);
    }
    fit[i] = best;
  }
  return fit;
}

/// Venn-Abers by definition: augment, pool ties, fit with the oracle, read
/// the fitted value at the test score.
inline double venn_abers_oracle(std::vector<calibration_pair> cal, double score, int label) {
  cal.push_back({score, label});
  std::sort(cal.begin(), cal.end(), [](auto& a, auto& b) { return a.score < b.score; });
  std::vector<double> v, w, scores;
  for (const auto& c : cal) {
    if (!scores.empty() && scores.back() == c.score) {
      v.back() = (v.back() * w.back() + c.label) / (w.back() + 1);
      w.back() += 1;
    } else {
      scores.push_back(c.score);
      v.push_back(c.label);
      w.push_back(1);
    }
  }
  const auto fit = isotonic_oracle(v, w);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] == score) return fit[i];
  return -1;
}

/// y = sin(x0) * 3 + x1 + noise whose sd grows with |x0|.
inline dataset heteroscedastic(std::size_t n, std::uint64_t seed) {
  dataset ds;
  ds.feature_names = {"x0", "x1"};
  ds.target_name = "y";
  rng gen(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = gen.uniform() * 6.0 - 3.0;
    const double x1 = gen.normal();
    ds.features.push_back(x0);
    ds.features.push_back(x1);
    ds.targets.push_back(3.0 * std::sin(x0) + x1 + gen.normal(0.0, 0.2 + 0.5 * std::abs(x0)));
  }
  return ds;
}

}  // namespace trustbench::testing
