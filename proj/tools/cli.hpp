#pragma once

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trustbench/session_http.hpp"
#include "trustbench/trustbench.hpp"

namespace trustbench::cli {

/// Exit codes: 0 success, 1 validation error, 2 internal error.
enum exit_code : int { ok = 0, validation_failure = 1, internal_failure = 2 };

namespace detail {

inline std::string read_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::validation, "cannot read file '" + path + "'", "path");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_output(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty()) {
    out << data;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw error(errc::validation, "cannot write file '" + path + "'", "out");
  f << data;
}

/// Reproducible echo of the effective flags, written to the error stream.
inline void echo_config(const CLI::App& sub, std::ostream& err) {
  err << "# trustbench " << sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_lnames().empty()) continue;
    const std::string flag = "--" + opt->get_lnames().front();
    if (opt->get_type_size() == 0) {
      if (opt->count() > 0) err << " " << flag;
      continue;
    }
    std::vector<std::string> values = opt->results();
    if (values.empty()) {
      const std::string def = opt->get_default_str();
      if (def.empty()) continue;
      values = {def};
    }
    for (const auto& v : values) err << " " << flag << " " << v;
  }
  err << "\n";
}

inline void require_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw error(errc::invalid_epsilon, "epsilon must lie in (0, 1), got " + std::to_string(epsilon),
                "epsilon");
}

}  // namespace detail

struct analyze_args {
  std::string log;
  std::string task;
  std::string mode = "tolerance";
  std::optional<double> tolerance;
  std::vector<double> betas{1.0, 2.0};
  std::string format = "text";
  std::string out;
};

inline int run_analyze(const analyze_args& a, std::ostream& out) {
  const auto kind = parse_task(a.task);
  if (!kind) throw error(errc::validation, "must be classification or regression", "task");
  const auto mode = parse_interval_mapping(a.mode);
  if (!mode) throw error(errc::validation, "must be tolerance or coverage", "mode");
  const auto format = parse_report_format(a.format);
  if (!format) throw error(errc::validation, "must be text or structured", "format");
  matrix_spec spec{*kind, *mode, 0.0};
  if (*kind == task::regression && *mode == interval_mapping::tolerance) {
    if (!a.tolerance) throw error(errc::validation, "required in tolerance mode", "tolerance");
  }
  if (a.tolerance) {
    if (!(*a.tolerance >= 0.0)) throw error(errc::negative_tolerance, "must be >= 0", "tolerance");
    spec.tolerance = *a.tolerance;
  }
  const trial_log log = parse_trial_log(detail::read_input(a.log), a.log);
  const auto report = make_metrics_report(log.records, spec, a.betas);
  detail::write_output(a.out, render_report(report, *format), out);
  return ok;
}

struct compare_args {
  std::string baseline;
  std::string explained;
  std::string metric;
  std::size_t n_perm = 10000;
  std::uint64_t seed = default_seed;
};

/// The task is read from the logs; regression logs are mapped in coverage
/// mode, which needs no tolerance.
inline int run_compare(const compare_args& a, std::ostream& out) {
  const auto metric = parse_metric_kind(a.metric);
  if (!metric) throw error(errc::validation, "must be u_at, u_pr or u_rc", "metric");
  const trial_log base = parse_trial_log(detail::read_input(a.baseline), a.baseline);
  const trial_log expl = parse_trial_log(detail::read_input(a.explained), a.explained);
  if (base.empty()) throw error(errc::empty_phase, "baseline log has no trials", "baseline");
  if (expl.empty()) throw error(errc::empty_phase, "explained log has no trials", "explained");
  matrix_spec spec{base.records.front().task, interval_mapping::coverage, 0.0};
  comparison_options opt;
  opt.permutations = a.n_perm;
  opt.seed = a.seed;
  const auto result = permutation_test(base.records, expl.records, spec, *metric, opt);
  out << render_report(result, report_format::text);
  return ok;
}

struct simulate_args {
  std::string kind;
  std::size_t n = 0;
  std::uint64_t seed = default_seed;
  double a = 0.9;
  double b = 0.4;
  double accuracy = 0.75;
  double noise_sd = 1.0;
  double width = 1.96;
  double bias = 0.0;
  std::string out;
};

inline int run_simulate(const simulate_args& s, std::ostream& out) {
  const auto kind = parse_task(s.kind);
  if (!kind) throw error(errc::validation, "must be classification or regression", "kind");
  synthetic_user_spec spec;
  spec.p_trust_given_correct = s.a;
  spec.p_trust_given_incorrect = s.b;
  spec.interval_base_width = s.width;
  spec.interval_center_bias = s.bias;
  spec.seed = s.seed;
  const trial_log log = *kind == task::classification
                            ? simulate_classification_trials(spec, s.accuracy, s.n)
                            : simulate_regression_trials(spec, s.noise_sd, s.n);
  detail::write_output(s.out, write_trial_log(log), out);
  return ok;
}

struct conformal_args {
  std::string data;
  double epsilon = 0.1;
  bool normalized = false;
  double beta_smoothing = default_beta_smoothing;
  std::size_t k = default_k;
  std::uint64_t seed = default_seed;
};

inline int run_conformal(const conformal_args& a, std::ostream& out) {
  detail::require_epsilon(a.epsilon);
  const dataset ds = load_dataset_csv(detail::read_input(a.data));
  split_spec sp;
  sp.seed = a.seed;
  const auto parts = split(ds, sp);
  const auto model = knn_fit(parts.train, a.k, task::regression);
  const auto scores = calibrate(model, parts.calibration, a.normalized, a.beta_smoothing);

  std::vector<prediction_interval> intervals;
  for (std::size_t i = 0; i < parts.test.rows(); ++i)
    intervals.push_back(predict_interval(model, scores, parts.test.row(i), a.epsilon));
  const double coverage = empirical_coverage(intervals, parts.test.targets);
  double sum = 0.0;
  double lo = intervals.front().width();
  double hi = lo;
  for (const auto& iv : intervals) {
    sum += iv.width();
    lo = std::min(lo, iv.width());
    hi = std::max(hi, iv.width());
  }
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "n_train: %zu\nn_calibration: %zu\nn_test: %zu\nepsilon: %g\nnormalized: %s\n"
                "target_coverage: %.4f\nempirical_coverage: %.4f\nmean_width: %.4f\n"
                "min_width: %.4f\nmax_width: %.4f\n",
                parts.train.rows(), parts.calibration.rows(), parts.test.rows(), a.epsilon,
                a.normalized ? "true" : "false", 1.0 - a.epsilon, coverage,
                sum / static_cast<double>(intervals.size()), lo, hi);
  out << buf;
  return ok;
}

struct venn_abers_args {
  std::string data;
  std::size_t bins = default_reliability_bins;
  std::size_t k = default_k;
  std::uint64_t seed = default_seed;
};

inline int run_venn_abers(const venn_abers_args& a, std::ostream& out) {
  const dataset ds = load_dataset_csv(detail::read_input(a.data));
  for (double y : ds.targets)
    if (y != 0.0 && y != 1.0) throw error(errc::validation, "targets must be 0 or 1", ds.target_name);
  split_spec sp;
  sp.seed = a.seed;
  const auto parts = split(ds, sp);
  const auto model = knn_fit(parts.train, a.k, task::classification);

  std::vector<calibration_pair> cal;
  for (std::size_t i = 0; i < parts.calibration.rows(); ++i)
    cal.push_back({*knn_predict(model, parts.calibration.row(i)).score,
                   static_cast<int>(parts.calibration.targets[i])});

  std::vector<double> raw;
  std::vector<double> merged;
  std::vector<int> outcomes;
  double width = 0.0;
  for (std::size_t i = 0; i < parts.test.rows(); ++i) {
    const double score = *knn_predict(model, parts.test.row(i)).score;
    const auto va = venn_abers_interval(cal, score);
    raw.push_back(score);
    merged.push_back(va.merged);
    width += va.width();
    outcomes.push_back(static_cast<int>(parts.test.targets[i]));
  }
  const auto ece_raw = expected_calibration_error(raw, outcomes, a.bins);
  const auto ece_merged = expected_calibration_error(merged, outcomes, a.bins);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "n_train: %zu\nn_calibration: %zu\nn_test: %zu\nmean_interval_width: %.4f\n"
                "ece_raw: %.4f\nece_merged: %.4f\n",
                parts.train.rows(), parts.calibration.rows(), parts.test.rows(),
                width / static_cast<double>(raw.size()), ece_raw.ece, ece_merged.ece);
  out << buf;
  out << "reliability (merged):\n";
  for (const auto& b : ece_merged.bins) {
    std::snprintf(buf, sizeof buf, "  [%.2f, %.2f) confidence %.4f accuracy %.4f count %zu\n",
                  b.lower, b.upper, b.mean_confidence, b.empirical_accuracy, b.count);
    out << buf;
  }
  return ok;
}

struct serve_args {
  int port = 8080;
  std::string sessions_dir;
};

inline int run_serve(const serve_args& a, std::ostream& err) {
  service::session_store store(a.sessions_dir);
  httplib::Server server;
  service::mount(server, store);
  err << "listening on 0.0.0.0:" << a.port << " (sessions in " << a.sessions_dir << ")\n";
  if (!server.listen("0.0.0.0", a.port)) {
    err << "error: cannot listen on port " << a.port << "\n";
    return internal_failure;
  }
  return ok;
}

/// Parses argv, runs one subcommand, and maps failures onto exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"trustbench: appropriate-trust evaluation workbench", "trustbench"};
  app.require_subcommand(1);

  analyze_args an;
  auto* analyze = app.add_subcommand("analyze", "Trust matrix and user metrics for a trial log");
  analyze->add_option("--log", an.log, "Trial log (JSON lines)")->required();
  analyze->add_option("--task", an.task, "classification|regression")
      ->required()
      ->check(CLI::IsMember({"classification", "regression"}));
  analyze->add_option("--mode", an.mode, "Regression interval mapping: tolerance|coverage")
      ->check(CLI::IsMember({"tolerance", "coverage"}))
      ->capture_default_str();
  analyze->add_option("--tolerance", an.tolerance, "Model-correctness tolerance (tolerance mode)");
  analyze->add_option("--beta", an.betas, "F-beta weights (repeatable)")->capture_default_str();
  analyze->add_option("--format", an.format, "text|structured")
      ->check(CLI::IsMember({"text", "structured"}))
      ->capture_default_str();
  analyze->add_option("--out", an.out, "Output path (default: standard output)");

  compare_args cmp;
  auto* compare = app.add_subcommand("compare", "Baseline vs explained permutation test");
  compare->add_option("--baseline", cmp.baseline, "Baseline-phase trial log")->required();
  compare->add_option("--explained", cmp.explained, "Explained-phase trial log")->required();
  compare->add_option("--metric", cmp.metric, "u_at|u_pr|u_rc")
      ->required()
      ->check(CLI::IsMember({"u_at", "u_pr", "u_rc"}));
  compare->add_option("--n-perm", cmp.n_perm, "Number of permutations")->capture_default_str();
  compare->add_option("--seed", cmp.seed, "Random seed")->capture_default_str();

  simulate_args sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trial log");
  simulate->add_option("--kind", sim.kind, "classification|regression")
      ->required()
      ->check(CLI::IsMember({"classification", "regression"}));
  simulate->add_option("--n", sim.n, "Number of trials")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->required();
  simulate->add_option("--a", sim.a, "P(trust | correct)")->capture_default_str();
  simulate->add_option("--b", sim.b, "P(trust | incorrect)")->capture_default_str();
  simulate->add_option("--accuracy", sim.accuracy, "Model accuracy")->capture_default_str();
  simulate->add_option("--noise-sd", sim.noise_sd, "Truth noise sd (regression)")
      ->capture_default_str();
  simulate->add_option("--width", sim.width, "User interval half-width (regression)")
      ->capture_default_str();
  simulate->add_option("--bias", sim.bias, "User interval centre bias (regression)")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output trial log")->required();

  conformal_args cf;
  auto* conformal = app.add_subcommand("conformal", "Split-conformal kNN regression intervals");
  conformal->add_option("--data", cf.data, "CSV with header; last column is the target")
      ->required();
  conformal->add_option("--epsilon", cf.epsilon, "Significance level in (0, 1)")->required();
  conformal->add_flag("--normalized", cf.normalized, "Difficulty-normalized scores");
  conformal->add_option("--beta-smoothing", cf.beta_smoothing, "Normalization smoothing")
      ->capture_default_str();
  conformal->add_option("--k", cf.k, "Neighbours")->capture_default_str();
  conformal->add_option("--seed", cf.seed, "Split seed")->capture_default_str();

  venn_abers_args va;
  auto* venn = app.add_subcommand("venn-abers", "Venn-Abers calibration of kNN scores");
  venn->add_option("--data", va.data, "CSV with header; last column is a 0/1 label")->required();
  venn->add_option("--bins", va.bins, "Reliability bins")->capture_default_str();
  venn->add_option("--k", va.k, "Neighbours")->capture_default_str();
  venn->add_option("--seed", va.seed, "Split seed")->capture_default_str();

  serve_args sv;
  auto* serve = app.add_subcommand("serve", "Run the session HTTP service");
  serve->add_option("--port", sv.port, "TCP port")->required();
  serve->add_option("--sessions-dir", sv.sessions_dir, "Session storage root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    // Subcommand help arrives as CallForHelp too; other parse errors are
    // validation failures.
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) detail::echo_config(*sub, err);
    if (*analyze) return run_analyze(an, out);
    if (*compare) return run_compare(cmp, out);
    if (*simulate) return run_simulate(sim, out);
    if (*conformal) return run_conformal(cf, out);
    if (*venn) return run_venn_abers(va, out);
    if (*serve) return run_serve(sv, err);
  } catch (const error& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return internal_failure;
  }
  return internal_failure;
}

}  // namespace trustbench::cli
