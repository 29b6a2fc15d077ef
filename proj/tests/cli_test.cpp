#include "cli.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trustbench/random.hpp"

namespace trustbench::cli {
namespace {

struct result {
  int code;
  std::string out;
  std::string err;
};

result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "trustbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = testing::temp_dir("cli"); }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
  }

  // y = x0 + 2 x1 + heteroscedastic noise.
  std::string regression_csv(std::size_t n) const {
    rng g(99);
    std::string s = "x0,x1,y\n";
    char buf[128];
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = g.uniform() * 4, x1 = g.uniform() * 4;
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", x0, x1, x0 + 2 * x1 + g.normal(0, 0.2 + 0.3 * x0));
      s += buf;
    }
    return s;
  }

  std::string classification_csv(std::size_t n) const {
    rng g(5);
    std::string s = "x0,x1,label\n";
    char buf[128];
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = g.normal(), x1 = g.normal();
      const double p = 1.0 / (1.0 + std::exp(-2.0 * (x0 + x1)));
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d\n", x0, x1, g.bernoulli(p) ? 1 : 0);
      s += buf;
    }
    return s;
  }

  std::filesystem::path dir_;
};

TEST_F(CliTest, AnalyzeReferenceStudy) {
  const auto r = invoke({"analyze", "--log", testing::fixture_path("reference_study.jsonl"), "--task", "classification"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("U_at: 0.73\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("U_pr: 0.61\n"), std::string::npos);
  EXPECT_NE(r.out.find("U_rc: 0.92\n"), std::string::npos);
  EXPECT_NE(r.out.find("F_2: 0.83\n"), std::string::npos);
  EXPECT_NE(r.err.find("# trustbench analyze --log"), std::string::npos);
}

TEST_F(CliTest, AnalyzeStructuredRoundTrips) {
  const auto r = invoke({"analyze", "--log", testing::fixture_path("reference_study.jsonl"), "--task",
                         "classification", "--format", "structured", "--beta", "0.5", "--out",
                         path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report =
      metrics_report_from_json(nlohmann::ordered_json::parse(testing::read_file(path("report.json"))));
  EXPECT_EQ(report.matrix.tt, 11u);
  ASSERT_TRUE(report.f_beta.contains(0.5));
  // (1.25 * 11) / (1.25 * 11 + 0.25 * 1 + 7)
  EXPECT_NEAR(*report.f_beta.at(0.5), 13.75 / 21.0, 1e-12);
}

TEST_F(CliTest, EmptyLogReportsUndefined) {
  write("empty.jsonl", "");
  const auto r = invoke({"analyze", "--log", path("empty.jsonl"), "--task", "classification"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("U_at: n/a"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n_trials: 0"), std::string::npos);
}

TEST_F(CliTest, ValidationFailuresExitOne) {
  write("bad.jsonl", "{\"trial_id\": 1}\n");
  auto r = invoke({"analyze", "--log", path("bad.jsonl"), "--task", "classification"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;

  r = invoke({"analyze", "--log", testing::fixture_path("reference_study.jsonl"), "--task", "regression"});
  EXPECT_EQ(r.code, 1);

  r = invoke({"analyze", "--log", path("missing.jsonl"), "--task", "classification"});
  EXPECT_EQ(r.code, 1);

  r = invoke({"analyze", "--log", testing::fixture_path("reference_study.jsonl"), "--bogus"});
  EXPECT_EQ(r.code, 1);

  r = invoke({"frobnicate"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, ConformalRejectsEpsilonBeforeReadingData) {
  const auto r = invoke({"conformal", "--data", path("does-not-exist.csv"), "--epsilon", "1.5"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epsilon"), std::string::npos) << r.err;
}

TEST_F(CliTest, RegressionToleranceModeNeedsTolerance) {
  ASSERT_EQ(invoke({"simulate", "--kind", "regression", "--n", "20", "--seed", "3", "--out", path("r.jsonl")}).code, 0);
  auto r = invoke({"analyze", "--log", path("r.jsonl"), "--task", "regression", "--mode", "tolerance"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("tolerance"), std::string::npos) << r.err;
  r = invoke({"analyze", "--log", path("r.jsonl"), "--task", "regression", "--mode", "tolerance",
              "--tolerance", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  r = invoke({"analyze", "--log", path("r.jsonl"), "--task", "regression", "--mode", "coverage"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n_trials: 20"), std::string::npos);
}

TEST_F(CliTest, SimulateIsDeterministic) {
  ASSERT_EQ(invoke({"simulate", "--kind", "classification", "--n", "500", "--seed", "11", "--out", path("a.jsonl")}).code, 0);
  ASSERT_EQ(invoke({"simulate", "--kind", "classification", "--n", "500", "--seed", "11", "--out", path("b.jsonl")}).code, 0);
  ASSERT_EQ(invoke({"simulate", "--kind", "classification", "--n", "500", "--seed", "12", "--out", path("c.jsonl")}).code, 0);
  EXPECT_EQ(testing::read_file(path("a.jsonl")), testing::read_file(path("b.jsonl")));
  EXPECT_NE(testing::read_file(path("a.jsonl")), testing::read_file(path("c.jsonl")));
  EXPECT_EQ(parse_trial_log(testing::read_file(path("a.jsonl"))).size(), 500u);
}

TEST_F(CliTest, CompareSeparatesUsers) {
  ASSERT_EQ(invoke({"simulate", "--kind", "classification", "--n", "200", "--seed", "1", "--a", "0.5", "--b", "0.5", "--out",
                    path("base.jsonl")}).code, 0);
  ASSERT_EQ(invoke({"simulate", "--kind", "classification", "--n", "200", "--seed", "2", "--a", "0.95", "--b", "0.05", "--out",
                    path("expl.jsonl")}).code, 0);
  const std::vector<std::string> args{"compare", "--baseline", path("base.jsonl"), "--explained",
                                      path("expl.jsonl"), "--metric", "u_at", "--n-perm", "2000", "--seed", "9"};
  const auto r1 = invoke(args);
  const auto r2 = invoke(args);
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_EQ(r1.out, r2.out);
  EXPECT_NE(r1.out.find("p_value: 0.0005"), std::string::npos) << r1.out;
}

TEST_F(CliTest, ConformalAndVennAbersRunDeterministically) {
  write("reg.csv", regression_csv(600));
  write("cls.csv", classification_csv(600));
  for (const bool normalized : {false, true}) {
    std::vector<std::string> args{"conformal", "--data", path("reg.csv"), "--epsilon", "0.1"};
    if (normalized) args.push_back("--normalized");
    const auto r1 = invoke(args);
    const auto r2 = invoke(args);
    ASSERT_EQ(r1.code, 0) << r1.err;
    EXPECT_EQ(r1.out, r2.out);
    EXPECT_NE(r1.out.find("n_test: 120"), std::string::npos) << r1.out;
    EXPECT_NE(r1.out.find("target_coverage: 0.9000"), std::string::npos);
  }
  const auto v1 = invoke({"venn-abers", "--data", path("cls.csv")});
  const auto v2 = invoke({"venn-abers", "--data", path("cls.csv")});
  ASSERT_EQ(v1.code, 0) << v1.err;
  EXPECT_EQ(v1.out, v2.out);
  EXPECT_NE(v1.out.find("ece_merged: "), std::string::npos);

  auto r = invoke({"venn-abers", "--data", path("reg.csv")});
  EXPECT_EQ(r.code, 1);
  write("broken.csv", "x0,y\n1.0,abc\n");
  r = invoke({"conformal", "--data", path("broken.csv"), "--epsilon", "0.1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, HelpListsEveryFlagOnce) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"analyze", {"--log", "--task", "--mode", "--tolerance", "--beta", "--format", "--out"}},
      {"compare", {"--baseline", "--explained", "--metric", "--n-perm", "--seed"}},
      {"simulate", {"--kind", "--n", "--seed", "--a", "--b", "--accuracy", "--noise-sd", "--width", "--bias", "--out"}},
      {"conformal", {"--data", "--epsilon", "--normalized", "--beta-smoothing", "--k", "--seed"}},
      {"venn-abers", {"--data", "--bins", "--k", "--seed"}},
      {"serve", {"--port", "--sessions-dir"}},
  };
  for (const auto& [sub, expected] : flags) {
    const auto r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& flag : expected) {
      std::size_t count = 0;
      for (auto pos = r.out.find(flag + " "); pos != std::string::npos; pos = r.out.find(flag + " ", pos + 1))
        ++count;
      EXPECT_EQ(count, 1u) << sub << " " << flag << "\n" << r.out;
    }
  }
}

}  // namespace
}  // namespace trustbench::cli
