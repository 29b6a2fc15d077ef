#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "trustbench/dataset.hpp"
#include "trustbench/error.hpp"
#include "trustbench/trial_log.hpp"

namespace trustbench {

inline constexpr std::size_t default_k = 5;

/// k-nearest-neighbour reference model. Features are z-scored with the
/// training statistics; distances are Euclidean in that space, and equal
/// distances are ordered by training row index.
class knn_model {
 public:
  knn_model(const dataset& train, std::size_t k, task kind) : k_(k), kind_(kind), dims_(train.cols()) {
    if (k == 0 || k > train.rows())
      throw error(errc::invalid_k,
                  "k must lie in [1, " + std::to_string(train.rows()) + "], got " + std::to_string(k),
                  "k");
    const std::size_t n = train.rows();
    mean_.assign(dims_, 0.0);
    scale_.assign(dims_, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < dims_; ++c) mean_[c] += train.row(i)[c];
    for (double& m : mean_) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < dims_; ++c) {
        const double d = train.row(i)[c] - mean_[c];
        scale_[c] += d * d;
      }
    for (double& s : scale_) {
      s = std::sqrt(s / static_cast<double>(n));
      if (!(s > 0.0)) s = 1.0;  // constant column
    }
    points_.reserve(n * dims_);
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = normalize(train.row(i));
      points_.insert(points_.end(), z.begin(), z.end());
    }
    targets_ = train.targets;
  }

  std::size_t k() const noexcept { return k_; }
  task kind() const noexcept { return kind_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return targets_.size(); }

  std::vector<double> normalize(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) z[c] = (x[c] - mean_[c]) / scale_[c];
    return z;
  }

  struct neighbor {
    std::size_t index;
    double distance;
  };

  /// The k nearest training rows, nearest first.
  std::vector<neighbor> neighbors(std::span<const double> x) const {
    if (x.size() != dims_)
      throw error(errc::dimension_mismatch,
                  "expected " + std::to_string(dims_) + " features, got " + std::to_string(x.size()),
                  "x");
    const auto z = normalize(x);
    std::vector<std::pair<double, std::size_t>> d2(size());
    for (std::size_t i = 0; i < size(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < dims_; ++c) {
        const double diff = points_[i * dims_ + c] - z[c];
        s += diff * diff;
      }
      d2[i] = {s, i};
    }
    std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(k_), d2.end());
    std::vector<neighbor> out(k_);
    for (std::size_t j = 0; j < k_; ++j) out[j] = {d2[j].second, std::sqrt(d2[j].first)};
    return out;
  }

  double target(std::size_t i) const { return targets_[i]; }

 private:
  std::size_t k_;
  task kind_;
  std::size_t dims_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<double> points_;
  std::vector<double> targets_;
};

inline knn_model knn_fit(const dataset& train, std::size_t k = default_k,
                         task kind = task::regression) {
  return knn_model(train, k, kind);
}

struct knn_prediction {
  double point = 0.0;
  /// Fraction of neighbours with label 1; classification only.
  std::optional<double> score;
};

/// Regression: neighbour target mean. Classification: majority label (ties
/// to the smallest label) with the positive-class neighbour fraction as score.
inline knn_prediction knn_predict(const knn_model& model, std::span<const double> x) {
  const auto nn = model.neighbors(x);
  knn_prediction p;
  if (model.kind() == task::regression) {
    double sum = 0.0;
    for (const auto& n : nn) sum += model.target(n.index);
    p.point = sum / static_cast<double>(nn.size());
    return p;
  }
  std::map<double, std::size_t> votes;
  std::size_t positives = 0;
  for (const auto& n : nn) {
    ++votes[model.target(n.index)];
    if (model.target(n.index) == 1.0) ++positives;
  }
  std::size_t best = 0;
  for (const auto& [label, count] : votes)
    if (count > best) {
      best = count;
      p.point = label;
    }
  p.score = static_cast<double>(positives) / static_cast<double>(nn.size());
  return p;
}

/// Mean Euclidean distance to the k nearest training rows (normalized space).
inline double difficulty_estimate(const knn_model& model, std::span<const double> x) {
  const auto nn = model.neighbors(x);
  double sum = 0.0;
  for (const auto& n : nn) sum += n.distance;
  return sum / static_cast<double>(nn.size());
}

}  // namespace trustbench
