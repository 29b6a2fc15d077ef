#include "trustbench/trust_metrics.hpp"

#include <algorithm>
#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trustbench/random.hpp"

namespace trustbench {
namespace {

using testing::classification_trial;
using testing::regression_trial;

const trust_matrix kReference{.tt = 11, .tm = 5, .ft = 7, .fm = 1};

TEST(TrustMatrixTest, ReferenceStudy) {
  EXPECT_EQ(build_trust_matrix_classification(testing::reference_log().records), kReference);
}

TEST(TrustMatrixTest, EmptyIsZero) {
  EXPECT_EQ(build_trust_matrix_classification({}), trust_matrix{});
  EXPECT_EQ(build_trust_matrix_regression({}, interval_mapping::coverage), trust_matrix{});
}

TEST(TrustMatrixTest, MulticlassCollapsesToCorrectness) {
  auto t = classification_trial("t", false, true);
  t.truth = std::string("dog");
  t.prediction = std::string("bird");
  EXPECT_EQ(build_trust_matrix_classification(std::vector{t}).ft, 1u);
}

TEST(TrustMatrixTest, RejectsMixedTasks) {
  std::vector trials{classification_trial("a", true, true), regression_trial("b", 1, 1, 0, 2)};
  try {
    build_trust_matrix_classification(trials);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::task_mismatch);
  }
  EXPECT_THROW(build_trust_matrix_regression(trials, interval_mapping::coverage), error);
}

TEST(TrustMatrixTest, PerfectUserOnSimulatedModel) {
  rng gen(3);
  std::vector<trial_record> trials;
  for (int i = 0; i < 50; ++i) {
    const bool correct = gen.bernoulli(0.8);
    trials.push_back(classification_trial("t" + std::to_string(i), correct, correct));
  }
  const auto m = build_trust_matrix_classification(trials);
  EXPECT_EQ(m.ft, 0u);
  EXPECT_EQ(m.fm, 0u);
  EXPECT_EQ(m.tt + m.tm, 50u);
}

TEST(RegressionMappingTest, EverythingInside) {
  const auto j = map_regression_trial(regression_trial("t", 10, 10.5, 9, 12),
                                      interval_mapping::tolerance, 1.0);
  EXPECT_EQ(j, (regression_judgment{regression_outcome::hit, true, true}));
  EXPECT_EQ(cell_for(j, interval_mapping::tolerance), trust_cell::tt);
}

TEST(RegressionMappingTest, MissAboveIsFalseTrustInBothModes) {
  const auto t = regression_trial("t", 10, 15, 9, 12);
  for (auto mode : {interval_mapping::tolerance, interval_mapping::coverage}) {
    const auto j = map_regression_trial(t, mode, 1.0);
    EXPECT_EQ(j.outcome, regression_outcome::miss_above);
    EXPECT_TRUE(j.trusted);
    EXPECT_FALSE(j.model_correct);
    EXPECT_EQ(cell_for(j, mode), trust_cell::ft);
  }
}

TEST(RegressionMappingTest, MissBelowCorrectUntrustedIsFalseMistrust) {
  const auto j = map_regression_trial(regression_trial("t", 10, 10.2, 11, 12),
                                      interval_mapping::tolerance, 1.0);
  EXPECT_EQ(j, (regression_judgment{regression_outcome::miss_below, false, true}));
  EXPECT_EQ(cell_for(j, interval_mapping::tolerance), trust_cell::fm);
}

TEST(RegressionMappingTest, Errors) {
  auto t = regression_trial("t", 10, 10, 9, 11);
  try {
    map_regression_trial(t, interval_mapping::tolerance, -1.0);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::negative_tolerance);
  }
  t.interval.reset();
  try {
    map_regression_trial(t, interval_mapping::coverage);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::missing_interval);
  }
}

TEST(RegressionMatrixTest, InfiniteToleranceAllHits) {
  std::vector<trial_record> trials;
  for (int i = 0; i < 10; ++i)
    trials.push_back(regression_trial("t" + std::to_string(i), i, i + 0.3 * (i % 3), i - 1, i + 1));
  const auto m = build_trust_matrix_regression(trials, interval_mapping::tolerance,
                                               std::numeric_limits<double>::infinity());
  EXPECT_EQ(m, (trust_matrix{.tt = 10}));
}

TEST(RegressionMatrixTest, CoverageModeCounts) {
  std::vector<trial_record> trials;
  for (int i = 0; i < 8; ++i) trials.push_back(regression_trial("h" + std::to_string(i), 5, 5.5, 4, 6));
  trials.push_back(regression_trial("above", 5, 9, 4, 6));
  trials.push_back(regression_trial("below", 5, 1, 4, 6));
  const auto m = build_trust_matrix_regression(trials, interval_mapping::coverage);
  EXPECT_EQ(m, (trust_matrix{.tt = 8, .tm = 0, .ft = 1, .fm = 1}));
  // Coverage-mode precision/recall read straight off the outcome counts.
  EXPECT_DOUBLE_EQ(*user_precision(m), 8.0 / 9.0);
  EXPECT_DOUBLE_EQ(*user_recall(m), 8.0 / 9.0);
}

TEST(UserPrecisionTest, Examples) {
  EXPECT_NEAR(*user_precision(kReference), 11.0 / 18.0, 1e-15);
  EXPECT_EQ(user_precision({.tt = 5, .ft = 0}), 1.0);
  EXPECT_FALSE(user_precision({}));
}

TEST(UserRecallTest, Examples) {
  EXPECT_NEAR(*user_recall(kReference), 11.0 / 12.0, 1e-15);
  EXPECT_EQ(user_recall({.tt = 0, .fm = 3}), 0.0);
  EXPECT_FALSE(user_recall({}));
}

TEST(FBetaTest, Examples) {
  EXPECT_NEAR(*f_beta_trust(kReference, 1.0), 22.0 / 30.0, 1e-15);
  EXPECT_NEAR(*f_beta_trust(kReference, 2.0), 5.0 / 6.0, 1e-15);
  // p = r = x: tt/(tt+ft) = tt/(tt+fm) when ft = fm.
  for (std::uint64_t tt = 1; tt < 20; ++tt)
    for (std::uint64_t f = 0; f < 20; ++f) {
      const trust_matrix m{.tt = tt, .ft = f, .fm = f};
      EXPECT_NEAR(*f_beta_trust(m, 1.0), *user_precision(m), 1e-15);
    }
}

TEST(FBetaTest, UndefinedAndInvalid) {
  EXPECT_FALSE(f_beta_trust({.tm = 3}, 1.0));
  EXPECT_FALSE(f_beta_trust({.tm = 1, .ft = 2, .fm = 2}, 1.0));  // p = r = 0
  for (double beta : {0.0, -1.0, std::numeric_limits<double>::quiet_NaN()}) {
    try {
      f_beta_trust(kReference, beta);
      ADD_FAILURE() << beta;
    } catch (const error& e) {
      EXPECT_EQ(e.code(), errc::invalid_beta);
    }
  }
}

TEST(FBetaTest, MatchesPrecisionRecallFormula) {
  // Count form vs (1+b^2)pr/(b^2 p + r) from exact fractions.
  const double p = 11.0 / 18.0;
  const double r = 11.0 / 12.0;
  for (double beta : {0.5, 1.0, 2.0, 3.0}) {
    const double b2 = beta * beta;
    EXPECT_NEAR(*f_beta_trust(kReference, beta), (1 + b2) * p * r / (b2 * p + r), 1e-14) << beta;
  }
}

TEST(TrustRatesTest, ReferenceStudy) {
  const auto r = compute_trust_rates(kReference);
  EXPECT_NEAR(r.appropriate, 16.0 / 24.0, 1e-15);
  EXPECT_NEAR(*r.overtrust, 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(*r.undertrust, 1.0 / 12.0, 1e-15);
}

TEST(TrustRatesTest, Extremes) {
  EXPECT_EQ(compute_trust_rates({.tt = 4, .tm = 6}), (trust_rates{1.0, 0.0, 0.0}));
  const auto all_wrong = compute_trust_rates({.ft = 9});
  EXPECT_EQ(all_wrong.overtrust, 1.0);
  EXPECT_FALSE(all_wrong.undertrust);
  try {
    compute_trust_rates({});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::empty_matrix);
  }
}

TEST(MetricsReportTest, ReferenceStudy) {
  const auto log = testing::reference_log();
  const auto r = make_metrics_report(log.records, {task::classification});
  EXPECT_EQ(r.n_trials, 24u);
  EXPECT_NEAR(*r.u_pr, 0.6111, 1e-4);
  EXPECT_NEAR(*r.u_rc, 0.9167, 1e-4);
  EXPECT_NEAR(*r.u_at, 0.7333, 1e-4);
  EXPECT_EQ(r.f_beta.at(1.0), r.u_at);
}

TEST(MetricsReportTest, EmptyIsUndefined) {
  const auto r = make_metrics_report({}, {task::classification});
  EXPECT_EQ(r.matrix, trust_matrix{});
  EXPECT_FALSE(r.u_pr);
  EXPECT_FALSE(r.u_rc);
  EXPECT_FALSE(r.u_at);
  EXPECT_FALSE(r.rates);
}

TEST(MetricsReportTest, PermutationInvariant) {
  auto trials = testing::reference_log().records;
  const auto expected = make_metrics_report(trials, {task::classification});
  rng gen(11);
  for (int i = 0; i < 20; ++i) {
    shuffle(std::span<trial_record>(trials), gen);
    EXPECT_EQ(make_metrics_report(trials, {task::classification}), expected);
  }
}

trust_matrix random_matrix(rng& gen) {
  const std::uint64_t cap = gen.bernoulli(0.3) ? 4 : 1000;
  return {gen.below(cap), gen.below(cap), gen.below(cap), gen.below(cap)};
}

TEST(TrustMetricsProperty, IdentitiesOverRandomMatrices) {
  rng gen(2024);
  for (int iter = 0; iter < 2000; ++iter) {
    const auto m = random_matrix(gen);
    SCOPED_TRACE(::testing::Message() << m.tt << " " << m.tm << " " << m.ft << " " << m.fm);
    EXPECT_EQ(appropriate_trust(m), f_beta_trust(m, 1.0));

    trust_matrix swapped = m;
    std::swap(swapped.ft, swapped.fm);
    EXPECT_EQ(user_precision(swapped), user_recall(m));
    EXPECT_EQ(user_recall(swapped), user_precision(m));
    EXPECT_EQ(f_beta_trust(swapped, 1.0), f_beta_trust(m, 1.0));

    const std::uint64_t k = 1 + gen.below(50);
    const trust_matrix scaled{m.tt * k, m.tm * k, m.ft * k, m.fm * k};
    EXPECT_EQ(metrics_from_matrix(scaled).u_pr, metrics_from_matrix(m).u_pr);
    EXPECT_EQ(metrics_from_matrix(scaled).u_rc, metrics_from_matrix(m).u_rc);
    EXPECT_EQ(metrics_from_matrix(scaled).u_at, metrics_from_matrix(m).u_at);

    const auto report = metrics_from_matrix(m, std::vector{0.5, 1.0, 2.0});
    auto in_unit = [](std::optional<double> v) { return !v || (*v >= 0.0 && *v <= 1.0); };
    EXPECT_TRUE(in_unit(report.u_pr) && in_unit(report.u_rc) && in_unit(report.u_at));
    for (const auto& [beta, v] : report.f_beta) EXPECT_TRUE(in_unit(v)) << beta;
    if (report.rates) {
      EXPECT_TRUE(in_unit(report.rates->appropriate));
      EXPECT_TRUE(in_unit(report.rates->overtrust));
      EXPECT_TRUE(in_unit(report.rates->undertrust));
    }

    trust_matrix more = m;
    ++more.tt;
    for (double beta : {0.5, 1.0, 2.0}) {
      const auto a = f_beta_trust(m, beta);
      const auto b = f_beta_trust(more, beta);
      if (a && b) {
        EXPECT_GE(*b, *a);
      }
    }
  }
}

TEST(TrustMetricsProperty, OrderInvarianceOverTrials) {
  rng gen(5);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<trial_record> trials;
    const auto n = 1 + gen.below(40);
    for (std::size_t i = 0; i < n; ++i)
      trials.push_back(
          classification_trial("t" + std::to_string(i), gen.bernoulli(0.6), gen.bernoulli(0.5)));
    const auto expected = make_metrics_report(trials, {task::classification});
    shuffle(std::span<trial_record>(trials), gen);
    EXPECT_EQ(make_metrics_report(trials, {task::classification}), expected);
  }
}

}  // namespace
}  // namespace trustbench
