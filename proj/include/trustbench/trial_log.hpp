#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "trustbench/error.hpp"

namespace trustbench {

enum class phase { baseline, explained };
enum class task { classification, regression };

constexpr std::string_view to_string(phase p) noexcept {
  return p == phase::baseline ? "baseline" : "explained";
}
constexpr std::string_view to_string(task t) noexcept {
  return t == task::classification ? "classification" : "regression";
}

inline std::optional<phase> parse_phase(std::string_view s) {
  if (s == "baseline") return phase::baseline;
  if (s == "explained") return phase::explained;
  return std::nullopt;
}
inline std::optional<task> parse_task(std::string_view s) {
  if (s == "classification") return task::classification;
  if (s == "regression") return task::regression;
  return std::nullopt;
}

/// Class label (classification) or real value (regression).
using target_value = std::variant<std::string, double>;

/// Interval a participant states for a regression prediction.
struct user_interval {
  double lower = 0.0;
  double upper = 0.0;
  bool operator==(const user_interval&) const = default;
};

/// One participant judgment about one model prediction.
struct trial_record {
  std::string trial_id;
  std::string participant_id;
  trustbench::phase phase = phase::baseline;
  trustbench::task task = task::classification;
  target_value prediction;
  target_value truth;
  std::optional<bool> user_trust;
  std::optional<user_interval> interval;
  std::optional<double> user_confidence;
  bool explanation_shown = false;
  std::string timestamp;

  bool operator==(const trial_record&) const = default;

  /// Binary correctness of a classification prediction. Multi-class labels
  /// collapse to "prediction equals truth".
  bool prediction_correct() const { return prediction == truth; }

  double prediction_value() const { return std::get<double>(prediction); }
  double truth_value() const { return std::get<double>(truth); }
};

struct trial_log {
  std::vector<trial_record> records;
  std::string source;

  bool operator==(const trial_log&) const = default;
  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

/// Field names in canonical serialization order.
inline constexpr std::string_view trial_fields[] = {
    "trial_id", "participant_id", "phase",           "task",
    "prediction", "truth",        "user_trust",      "user_interval",
    "user_confidence", "explanation_shown", "timestamp",
};

/// Accepts `YYYY-MM-DDTHH:MM:SS[.frac]Z` only: UTC, no offsets.
inline bool is_rfc3339_utc(std::string_view s) {
  static const std::regex pattern(
      R"(^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d+)?Z$)");
  std::cmatch m;
  if (!std::regex_match(s.begin(), s.end(), m, pattern)) return false;
  const int month = std::stoi(m[2]);
  const int day = std::stoi(m[3]);
  const int hour = std::stoi(m[4]);
  const int minute = std::stoi(m[5]);
  const int second = std::stoi(m[6]);
  if (month < 1 || month > 12) return false;
  const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(m[1])},
                                        std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  return ymd.ok() && hour < 24 && minute < 60 && second <= 60;
}

/// Whole-second RFC 3339 UTC rendering of `t`.
inline std::string format_utc(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm parts{};
  gmtime_r(&secs, &parts);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buf;
}

/// Checks the per-record invariants; throws errc::validation naming the field.
inline void validate(const trial_record& r) {
  auto fail = [](std::string field, std::string msg) {
    throw error(errc::validation, std::move(msg), std::move(field));
  };
  if (r.trial_id.empty()) fail("trial_id", "must be a non-empty string");
  if (r.participant_id.empty()) fail("participant_id", "must be a non-empty string");
  const bool want_label = r.task == task::classification;
  for (auto [name, value] : {std::pair{"prediction", &r.prediction}, std::pair{"truth", &r.truth}}) {
    if (want_label && !std::holds_alternative<std::string>(*value))
      fail(name, "classification trials carry a label string");
    if (!want_label) {
      if (!std::holds_alternative<double>(*value))
        fail(name, "regression trials carry a number");
      if (!std::isfinite(std::get<double>(*value))) fail(name, "must be finite");
    }
  }
  if (want_label) {
    if (!r.user_trust) fail("user_trust", "required for classification trials");
    if (r.interval) fail("user_interval", "not allowed for classification trials");
  } else {
    if (r.user_trust) fail("user_trust", "not allowed for regression trials");
    if (!r.interval) fail("user_interval", "required for regression trials");
    if (!std::isfinite(r.interval->lower) || !std::isfinite(r.interval->upper))
      fail("user_interval", "bounds must be finite");
    if (r.interval->lower > r.interval->upper) fail("user_interval", "lower exceeds upper");
  }
  if (r.user_confidence &&
      !(*r.user_confidence >= 0.0 && *r.user_confidence <= 1.0))
    fail("user_confidence", "must lie in [0, 1]");
  if (!is_rfc3339_utc(r.timestamp)) fail("timestamp", "must be an RFC 3339 UTC timestamp");
}

inline void validate(const trial_log& log) {
  std::unordered_set<std::string_view> seen;
  for (const auto& r : log.records) {
    validate(r);
    if (!seen.insert(r.trial_id).second)
      throw error(errc::validation, "duplicate trial_id '" + r.trial_id + "'", "trial_id");
  }
}

/// Canonical JSON object for one record: every field present, in
/// `trial_fields` order, null for absent optionals.
inline nlohmann::ordered_json to_json(const trial_record& r) {
  auto value = [](const target_value& v) {
    return std::visit([](const auto& x) { return nlohmann::ordered_json(x); }, v);
  };
  nlohmann::ordered_json j;
  j["trial_id"] = r.trial_id;
  j["participant_id"] = r.participant_id;
  j["phase"] = to_string(r.phase);
  j["task"] = to_string(r.task);
  j["prediction"] = value(r.prediction);
  j["truth"] = value(r.truth);
  j["user_trust"] = r.user_trust ? nlohmann::ordered_json(*r.user_trust) : nullptr;
  if (r.interval) {
    j["user_interval"] = {{"lower", r.interval->lower}, {"upper", r.interval->upper}};
  } else {
    j["user_interval"] = nullptr;
  }
  j["user_confidence"] = r.user_confidence ? nlohmann::ordered_json(*r.user_confidence) : nullptr;
  j["explanation_shown"] = r.explanation_shown;
  j["timestamp"] = r.timestamp;
  return j;
}

/// Strict decode of one record object: unknown fields, wrong JSON types and
/// invariant violations all throw errc::validation naming the field.
template <typename Json>
trial_record record_from_json(const Json& j) {
  auto fail = [](std::string field, std::string msg) {
    throw error(errc::validation, std::move(msg), std::move(field));
  };
  if (!j.is_object()) fail("", "record must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(std::begin(trial_fields), std::end(trial_fields), it.key()) ==
        std::end(trial_fields))
      fail(it.key(), "unknown field");
  }
  auto required = [&](const char* name) -> const Json& {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) fail(name, "missing required field");
    return *it;
  };
  auto string_field = [&](const char* name) {
    const Json& v = required(name);
    if (!v.is_string()) fail(name, "must be a string");
    return v.template get<std::string>();
  };
  auto optional = [&](const char* name) -> const Json* {
    auto it = j.find(name);
    return (it == j.end() || it->is_null()) ? nullptr : &*it;
  };

  trial_record r;
  r.trial_id = string_field("trial_id");
  r.participant_id = string_field("participant_id");
  const auto ph = parse_phase(string_field("phase"));
  if (!ph) fail("phase", "must be \"baseline\" or \"explained\"");
  r.phase = *ph;
  const auto tk = parse_task(string_field("task"));
  if (!tk) fail("task", "must be \"classification\" or \"regression\"");
  r.task = *tk;

  for (auto [name, slot] : {std::pair{"prediction", &r.prediction}, std::pair{"truth", &r.truth}}) {
    const Json& v = required(name);
    if (r.task == task::classification) {
      if (!v.is_string()) fail(name, "classification trials carry a label string");
      *slot = v.template get<std::string>();
    } else {
      if (!v.is_number()) fail(name, "regression trials carry a number");
      *slot = v.template get<double>();
    }
  }
  if (const Json* v = optional("user_trust")) {
    if (!v->is_boolean()) fail("user_trust", "must be a boolean");
    r.user_trust = v->template get<bool>();
  }
  if (const Json* v = optional("user_interval")) {
    if (!v->is_object() || v->size() != 2 || !v->contains("lower") || !v->contains("upper") ||
        !(*v)["lower"].is_number() || !(*v)["upper"].is_number())
      fail("user_interval", "must be {\"lower\": number, \"upper\": number}");
    r.interval = user_interval{(*v)["lower"].template get<double>(),
                               (*v)["upper"].template get<double>()};
  }
  if (const Json* v = optional("user_confidence")) {
    if (!v->is_number()) fail("user_confidence", "must be a number");
    r.user_confidence = v->template get<double>();
  }
  const Json& shown = required("explanation_shown");
  if (!shown.is_boolean()) fail("explanation_shown", "must be a boolean");
  r.explanation_shown = shown.template get<bool>();
  r.timestamp = string_field("timestamp");
  validate(r);
  return r;
}

/// Canonical single-line serialization, without the trailing newline.
inline std::string write_trial_record(const trial_record& r) { return to_json(r).dump(); }

/// Parses newline-delimited records. Blank lines are skipped; the first
/// malformed record aborts with its 1-based line number.
inline trial_log parse_trial_log(std::string_view bytes, std::string source = {}) {
  trial_log log;
  log.source = std::move(source);
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  while (!bytes.empty()) {
    ++line_no;
    const auto nl = bytes.find('\n');
    std::string_view line = bytes.substr(0, nl);
    bytes = nl == std::string_view::npos ? std::string_view{} : bytes.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw error(errc::validation, std::string("malformed JSON: ") + e.what(), "", line_no);
    }
    try {
      trial_record r = record_from_json(j);
      if (!seen.insert(r.trial_id).second)
        throw error(errc::validation, "duplicate trial_id '" + r.trial_id + "'", "trial_id");
      log.records.push_back(std::move(r));
    } catch (const error& e) {
      throw error(e.code(), e.message(), e.field(), line_no);
    }
  }
  return log;
}

/// One canonical record per line, each terminated by '\n'.
inline std::string write_trial_log(const trial_log& log) {
  std::string out;
  for (const auto& r : log.records) {
    out += write_trial_record(r);
    out += '\n';
  }
  return out;
}

inline trial_log filter_by_phase(const trial_log& log, phase p) {
  trial_log out;
  out.source = log.source;
  std::copy_if(log.records.begin(), log.records.end(), std::back_inserter(out.records),
               [p](const trial_record& r) { return r.phase == p; });
  return out;
}

}  // namespace trustbench
