#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "trustbench/analysis.hpp"
#include "trustbench/trial_log.hpp"
#include "trustbench/trust_metrics.hpp"

namespace trustbench::service {

using json = nlohmann::ordered_json;

/// Failure with an HTTP status and a JSON body ({"error", "field", ...}).
class service_error : public std::runtime_error {
 public:
  service_error(int status, std::string message, std::string field = {}, json extra = {})
      : std::runtime_error(message), status_(status), body_(std::move(extra)) {
    if (!body_.is_object()) body_ = json::object();
    body_["error"] = std::move(message);
    if (!field.empty()) body_["field"] = std::move(field);
  }
  int status() const noexcept { return status_; }
  const json& body() const noexcept { return body_; }

 private:
  int status_;
  json body_;
};

struct interval_defaults {
  bool center_on_prediction = true;
  double initial_half_width = 1.0;
  double min_half_width = 0.0;
  double max_half_width = 0.0;
};

struct session_item {
  std::string item_id;
  target_value prediction;
  target_value truth;
  std::optional<std::string> explanation;
  trustbench::phase phase = phase::baseline;
};

/// Experiment definition. `participant_id` defaults to the session id;
/// regression sessions choose how intervals map onto the trust matrix via
/// `mapping` (tolerance mode needs a tolerance).
struct session_config {
  std::string session_id;
  std::string participant_id;
  trustbench::task task = task::classification;
  std::vector<session_item> items;
  std::optional<service::interval_defaults> interval_defaults;
  bool collect_confidence = false;
  matrix_spec mapping;
};

inline bool valid_session_id(std::string_view id) {
  static const std::regex pattern(R"(^[A-Za-z0-9_-]{1,64}$)");
  return std::regex_match(id.begin(), id.end(), pattern);
}

namespace detail {

[[noreturn]] inline void bad(std::string field, std::string msg) {
  throw service_error(400, std::move(msg), std::move(field));
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      bad(path + it.key(), "unknown field");
}

inline double number_at(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number()) bad(path + key, "must be a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) bad(path + key, "must be finite");
  return v;
}

inline json target_json(const target_value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

}  // namespace detail

inline session_config parse_session_config(const json& j) {
  using detail::bad;
  if (!j.is_object()) bad("", "config must be a JSON object");
  detail::reject_unknown(j,
                         {"session_id", "participant_id", "task", "items", "interval_defaults",
                          "collect_confidence", "mapping"},
                         "");
  session_config c;
  if (!j.contains("session_id") || !j["session_id"].is_string()) bad("session_id", "must be a string");
  c.session_id = j["session_id"].get<std::string>();
  if (!valid_session_id(c.session_id))
    bad("session_id", "must be 1-64 characters from [A-Za-z0-9_-]");
  c.participant_id = c.session_id;
  if (j.contains("participant_id")) {
    if (!j["participant_id"].is_string() || j["participant_id"].get<std::string>().empty())
      bad("participant_id", "must be a non-empty string");
    c.participant_id = j["participant_id"].get<std::string>();
  }
  if (!j.contains("task") || !j["task"].is_string()) bad("task", "must be a string");
  const auto t = parse_task(j["task"].get<std::string>());
  if (!t) bad("task", "must be \"classification\" or \"regression\"");
  c.task = *t;
  c.mapping.kind = c.task;

  if (!j.contains("items") || !j["items"].is_array() || j["items"].empty())
    bad("items", "must be a non-empty array");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < j["items"].size(); ++i) {
    const json& it = j["items"][i];
    const std::string path = "items[" + std::to_string(i) + "].";
    if (!it.is_object()) bad(path.substr(0, path.size() - 1), "must be an object");
    detail::reject_unknown(it, {"item_id", "prediction", "truth", "explanation", "phase"}, path);
    session_item item;
    if (!it.contains("item_id") || !it["item_id"].is_string() ||
        it["item_id"].get<std::string>().empty())
      bad(path + "item_id", "must be a non-empty string");
    item.item_id = it["item_id"].get<std::string>();
    if (!ids.insert(item.item_id).second) bad(path + "item_id", "duplicate item_id");
    for (const char* key : {"prediction", "truth"}) {
      target_value& slot = std::string_view(key) == "prediction" ? item.prediction : item.truth;
      if (c.task == task::classification) {
        if (!it.contains(key) || !it[key].is_string()) bad(path + key, "must be a label string");
        slot = it[key].get<std::string>();
      } else {
        slot = detail::number_at(it, key, path);
      }
    }
    if (it.contains("explanation") && !it["explanation"].is_null()) {
      if (!it["explanation"].is_string()) bad(path + "explanation", "must be a string or null");
      item.explanation = it["explanation"].get<std::string>();
    }
    if (!it.contains("phase") || !it["phase"].is_string()) bad(path + "phase", "must be a string");
    const auto ph = parse_phase(it["phase"].get<std::string>());
    if (!ph) bad(path + "phase", "must be \"baseline\" or \"explained\"");
    item.phase = *ph;
    c.items.push_back(std::move(item));
  }

  if (j.contains("interval_defaults") && !j["interval_defaults"].is_null()) {
    const json& d = j["interval_defaults"];
    const std::string path = "interval_defaults.";
    if (!d.is_object()) bad("interval_defaults", "must be an object");
    detail::reject_unknown(
        d, {"center_on_prediction", "initial_half_width", "min_half_width", "max_half_width"}, path);
    interval_defaults defs;
    if (!d.contains("center_on_prediction") || !d["center_on_prediction"].is_boolean())
      bad(path + "center_on_prediction", "must be a boolean");
    defs.center_on_prediction = d["center_on_prediction"].get<bool>();
    defs.initial_half_width = detail::number_at(d, "initial_half_width", path);
    defs.min_half_width = detail::number_at(d, "min_half_width", path);
    defs.max_half_width = detail::number_at(d, "max_half_width", path);
    if (defs.min_half_width < 0.0) bad(path + "min_half_width", "must be >= 0");
    if (defs.max_half_width < defs.min_half_width)
      bad(path + "max_half_width", "must be >= min_half_width");
    if (defs.initial_half_width < defs.min_half_width ||
        defs.initial_half_width > defs.max_half_width)
      bad(path + "initial_half_width", "must lie within [min_half_width, max_half_width]");
    c.interval_defaults = defs;
  }
  if (c.task == task::regression && !c.interval_defaults)
    bad("interval_defaults", "required for regression sessions");

  if (j.contains("collect_confidence")) {
    if (!j["collect_confidence"].is_boolean()) bad("collect_confidence", "must be a boolean");
    c.collect_confidence = j["collect_confidence"].get<bool>();
  }

  if (j.contains("mapping") && !j["mapping"].is_null()) {
    const json& m = j["mapping"];
    if (!m.is_object()) bad("mapping", "must be an object");
    detail::reject_unknown(m, {"mode", "tolerance"}, "mapping.");
    if (m.contains("mode")) {
      if (!m["mode"].is_string()) bad("mapping.mode", "must be a string");
      const auto mode = parse_interval_mapping(m["mode"].get<std::string>());
      if (!mode) bad("mapping.mode", "must be \"tolerance\" or \"coverage\"");
      c.mapping.mode = *mode;
    }
    if (m.contains("tolerance")) {
      c.mapping.tolerance = detail::number_at(m, "tolerance", "mapping.");
      if (c.mapping.tolerance < 0.0) bad("mapping.tolerance", "must be >= 0");
    } else if (c.task == task::regression && c.mapping.mode == interval_mapping::tolerance) {
      bad("mapping.tolerance", "required in tolerance mode");
    }
  } else if (c.task == task::regression) {
    bad("mapping", "regression sessions must define a mapping");
  }
  return c;
}

inline json to_json(const session_config& c) {
  json j;
  j["session_id"] = c.session_id;
  j["participant_id"] = c.participant_id;
  j["task"] = to_string(c.task);
  auto items = json::array();
  for (const auto& it : c.items) {
    json e;
    e["item_id"] = it.item_id;
    e["prediction"] = detail::target_json(it.prediction);
    e["truth"] = detail::target_json(it.truth);
    e["explanation"] = it.explanation ? json(*it.explanation) : json(nullptr);
    e["phase"] = to_string(it.phase);
    items.push_back(std::move(e));
  }
  j["items"] = std::move(items);
  if (c.interval_defaults) {
    j["interval_defaults"] = {{"center_on_prediction", c.interval_defaults->center_on_prediction},
                              {"initial_half_width", c.interval_defaults->initial_half_width},
                              {"min_half_width", c.interval_defaults->min_half_width},
                              {"max_half_width", c.interval_defaults->max_half_width}};
  } else {
    j["interval_defaults"] = nullptr;
  }
  j["collect_confidence"] = c.collect_confidence;
  if (c.task == task::regression) {
    j["mapping"] = {{"mode", to_string(c.mapping.mode)}, {"tolerance", c.mapping.tolerance}};
  } else {
    j["mapping"] = nullptr;
  }
  return j;
}

namespace detail {

/// Writes `data` at the end of `path` and fsyncs before returning.
inline void append_durable(const std::filesystem::path& path, std::string_view data) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw service_error(500, "cannot open " + path.string());
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw service_error(500, "write failed on " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw service_error(500, "fsync failed on " + path.string());
}

inline void write_file_durable(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  std::filesystem::remove(tmp);
  append_durable(tmp, data);
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Live session store backed by one directory per session:
///
///   <root>/<session_id>/config.json   validated config
///   <root>/<session_id>/trials.jsonl  acknowledged judgments, one per line
///
/// Constructing a store over an existing root resumes every session at its
/// first unanswered item. Sessions are independent; submissions within one
/// session are serialized.
class session_store {
 public:
  static constexpr const char* config_file = "config.json";
  static constexpr const char* log_file = "trials.jsonl";

  explicit session_store(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      if (!entry.is_directory() || !std::filesystem::exists(entry.path() / config_file)) continue;
      auto s = load(entry.path());
      const std::string id = s->config.session_id;
      sessions_.emplace(id, std::move(s));
    }
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path log_path(const std::string& id) const { return root_ / id / log_file; }

  /// POST /sessions
  std::string create_session(const json& body) {
    session_config cfg = parse_session_config(body);
    std::unique_lock lock(map_mutex_);
    if (sessions_.count(cfg.session_id))
      throw service_error(409, "session already exists", "session_id");
    const auto dir = root_ / cfg.session_id;
    if (std::filesystem::exists(dir)) throw service_error(409, "session already exists", "session_id");
    std::filesystem::create_directories(dir);
    detail::write_file_durable(dir / config_file, to_json(cfg).dump(2) + "\n");
    detail::append_durable(dir / log_file, "");
    auto s = std::make_unique<session>();
    s->config = std::move(cfg);
    const std::string id = s->config.session_id;
    sessions_.emplace(id, std::move(s));
    return id;
  }

  /// GET /sessions/{id}/next. The truth value is never included.
  json next_item(const std::string& id) const {
    const session& s = find(id);
    std::lock_guard lock(s.mutex);
    const auto& cfg = s.config;
    if (s.records.size() >= cfg.items.size()) return json{{"done", true}};
    const session_item& item = cfg.items[s.records.size()];
    json j;
    j["done"] = false;
    j["item_id"] = item.item_id;
    j["task"] = to_string(cfg.task);
    j["prediction"] = detail::target_json(item.prediction);
    if (item.explanation) j["explanation"] = *item.explanation;
    if (cfg.task == task::regression && cfg.interval_defaults) {
      const auto& d = *cfg.interval_defaults;
      j["interval_defaults"] = {{"center_on_prediction", d.center_on_prediction},
                                {"initial_half_width", d.initial_half_width},
                                {"min_half_width", d.min_half_width},
                                {"max_half_width", d.max_half_width}};
    }
    j["collect_confidence"] = cfg.collect_confidence;
    j["progress"] = {{"answered", s.records.size()}, {"total", cfg.items.size()}};
    return j;
  }

  /// POST /sessions/{id}/responses. Re-sending the last acknowledged
  /// submission is acknowledged again without touching the log.
  json submit_response(const std::string& id, const json& body) {
    session& s = find(id);
    std::lock_guard lock(s.mutex);
    const auto& cfg = s.config;
    if (!body.is_object()) detail::bad("", "body must be a JSON object");
    detail::reject_unknown(body, {"item_id", "user_trust", "user_interval", "user_confidence"}, "");
    if (!body.contains("item_id") || !body["item_id"].is_string())
      detail::bad("item_id", "must be a string");
    const std::string item_id = body["item_id"].get<std::string>();

    const auto find_item = [&](const std::string& iid) -> std::optional<std::size_t> {
      for (std::size_t i = 0; i < cfg.items.size(); ++i)
        if (cfg.items[i].item_id == iid) return i;
      return std::nullopt;
    };
    const auto index = find_item(item_id);
    if (!index) throw service_error(409, "unknown item_id '" + item_id + "'", "item_id");

    trial_record r = make_record(cfg, *index, body);

    if (*index + 1 == s.records.size() && same_judgment(s.records.back(), r)) {
      return ack(s, true);
    }
    if (*index != s.records.size()) {
      json extra{{"expected_item_id", s.records.size() < cfg.items.size()
                                          ? json(cfg.items[s.records.size()].item_id)
                                          : json(nullptr)}};
      throw service_error(409, "out-of-order submission for item '" + item_id + "'", "item_id",
                          extra);
    }
    validate(r);
    detail::append_durable(root_ / cfg.session_id / log_file, write_trial_record(r) + "\n");
    s.records.push_back(std::move(r));
    return ack(s, false);
  }

  /// GET /sessions/{id}/results: the analyze-path report over the on-disk
  /// log, plus per-phase reports when both phases are present.
  json session_results(const std::string& id) const {
    const session& s = find(id);
    std::lock_guard lock(s.mutex);
    if (s.records.size() < s.config.items.size())
      throw service_error(409, "session is not complete", "",
                          json{{"answered", s.records.size()}, {"total", s.config.items.size()}});
    const trial_log log =
        parse_trial_log(detail::read_file(root_ / id / log_file), (root_ / id / log_file).string());
    return results_json(log, s.config.mapping);
  }

  static json results_json(const trial_log& log, const matrix_spec& mapping) {
    json j;
    j["overall"] = to_json(make_metrics_report(log.records, mapping));
    const auto base = filter_by_phase(log, phase::baseline);
    const auto expl = filter_by_phase(log, phase::explained);
    if (!base.empty() && !expl.empty()) {
      j["phases"] = {{"baseline", to_json(make_metrics_report(base.records, mapping))},
                     {"explained", to_json(make_metrics_report(expl.records, mapping))}};
    } else {
      j["phases"] = nullptr;
    }
    return j;
  }

 private:
  struct session {
    session_config config;
    std::vector<trial_record> records;
    mutable std::mutex mutex;
  };

  static std::unique_ptr<session> load(const std::filesystem::path& dir) {
    auto s = std::make_unique<session>();
    s->config = parse_session_config(json::parse(detail::read_file(dir / config_file)));
    const auto path = dir / log_file;
    std::string bytes = detail::read_file(path);
    // A crash can leave a partial final line that was never acknowledged.
    if (const auto last_nl = bytes.rfind('\n'); bytes.size() && last_nl != bytes.size() - 1) {
      const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
      bytes.resize(keep);
      std::filesystem::resize_file(path, keep);
    }
    trial_log log = parse_trial_log(bytes, path.string());
    if (log.size() > s->config.items.size())
      throw error(errc::validation, "log has more records than items", path.string());
    for (std::size_t i = 0; i < log.size(); ++i)
      if (log.records[i].trial_id != s->config.items[i].item_id)
        throw error(errc::validation, "log record out of item order", "trial_id", i + 1);
    s->records = std::move(log.records);
    return s;
  }

  session& find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw service_error(404, "unknown session '" + id + "'");
    return *it->second;
  }

  static trial_record make_record(const session_config& cfg, std::size_t index, const json& body) {
    const session_item& item = cfg.items[index];
    trial_record r;
    r.trial_id = item.item_id;
    r.participant_id = cfg.participant_id;
    r.phase = item.phase;
    r.task = cfg.task;
    r.prediction = item.prediction;
    r.truth = item.truth;
    r.explanation_shown = item.explanation.has_value();
    r.timestamp = format_utc(std::chrono::system_clock::now());

    const bool has_trust = body.contains("user_trust") && !body["user_trust"].is_null();
    const bool has_interval = body.contains("user_interval") && !body["user_interval"].is_null();
    if (cfg.task == task::classification) {
      if (has_interval) detail::bad("user_interval", "classification items take user_trust");
      if (!has_trust || !body["user_trust"].is_boolean())
        detail::bad("user_trust", "must be a boolean");
      r.user_trust = body["user_trust"].get<bool>();
    } else {
      if (has_trust) detail::bad("user_trust", "regression items take user_interval");
      if (!has_interval) detail::bad("user_interval", "required for regression items");
      const json& iv = body["user_interval"];
      if (!iv.is_object() || iv.size() != 2 || !iv.contains("lower") || !iv.contains("upper") ||
          !iv["lower"].is_number() || !iv["upper"].is_number())
        detail::bad("user_interval", "must be {\"lower\": number, \"upper\": number}");
      r.interval = user_interval{iv["lower"].get<double>(), iv["upper"].get<double>()};
      if (!std::isfinite(r.interval->lower) || !std::isfinite(r.interval->upper))
        detail::bad("user_interval", "bounds must be finite");
      if (r.interval->lower > r.interval->upper) detail::bad("user_interval", "lower exceeds upper");
    }
    if (body.contains("user_confidence") && !body["user_confidence"].is_null()) {
      if (!body["user_confidence"].is_number()) detail::bad("user_confidence", "must be a number");
      const double c = body["user_confidence"].get<double>();
      if (!(c >= 0.0 && c <= 1.0)) detail::bad("user_confidence", "must lie in [0, 1]");
      r.user_confidence = c;
    }
    return r;
  }

  static bool same_judgment(const trial_record& a, const trial_record& b) {
    return a.trial_id == b.trial_id && a.user_trust == b.user_trust && a.interval == b.interval &&
           a.user_confidence == b.user_confidence;
  }

  static json ack(const session& s, bool duplicate) {
    const bool done = s.records.size() >= s.config.items.size();
    return json{{"accepted", true},
                {"duplicate", duplicate},
                {"answered", s.records.size()},
                {"total", s.config.items.size()},
                {"done", done}};
  }

  std::filesystem::path root_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<session>> sessions_;
};

}  // namespace trustbench::service
