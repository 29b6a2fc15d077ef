#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trustbench {

enum class errc {
  validation,
  parse,
  task_mismatch,
  missing_interval,
  negative_tolerance,
  invalid_beta,
  empty_matrix,
  insufficient_data,
  invalid_k,
  dimension_mismatch,
  empty_calibration,
  insufficient_calibration,
  invalid_epsilon,
  length_mismatch,
  empty_input,
  nonpositive_weight,
  single_class_calibration,
  invalid_interval_order,
  invalid_probability,
  invalid_spec,
  degenerate_parameters,
  too_few_resamples,
  too_few_permutations,
  empty_phase,
  undefined_metric,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::validation: return "ValidationError";
    case errc::parse: return "ParseError";
    case errc::task_mismatch: return "TaskMismatch";
    case errc::missing_interval: return "MissingInterval";
    case errc::negative_tolerance: return "NegativeTolerance";
    case errc::invalid_beta: return "InvalidBeta";
    case errc::empty_matrix: return "EmptyMatrix";
    case errc::insufficient_data: return "InsufficientData";
    case errc::invalid_k: return "InvalidK";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::empty_calibration: return "EmptyCalibration";
    case errc::insufficient_calibration: return "InsufficientCalibration";
    case errc::invalid_epsilon: return "InvalidEpsilon";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::empty_input: return "EmptyInput";
    case errc::nonpositive_weight: return "NonpositiveWeight";
    case errc::single_class_calibration: return "SingleClassCalibration";
    case errc::invalid_interval_order: return "InvalidIntervalOrder";
    case errc::invalid_probability: return "InvalidProbability";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::degenerate_parameters: return "DegenerateParameters";
    case errc::too_few_resamples: return "TooFewResamples";
    case errc::too_few_permutations: return "TooFewPermutations";
    case errc::empty_phase: return "EmptyPhase";
    case errc::undefined_metric: return "UndefinedMetric";
  }
  return "Error";
}

/// Every failure the library reports. `field()` names the offending input
/// (a record field, a flag, a config path) when one applies, and `line()`
/// carries a 1-based input line for parse failures, 0 otherwise.
class error : public std::runtime_error {
 public:
  error(errc code, std::string message, std::string field = {}, std::size_t line = 0)
      : std::runtime_error(format(code, message, field, line)),
        code_(code),
        message_(std::move(message)),
        field_(std::move(field)),
        line_(line) {}

  errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(errc code, const std::string& message, const std::string& field,
                            std::size_t line) {
    std::string out{to_string(code)};
    if (line != 0) out += " at line " + std::to_string(line);
    if (!field.empty()) out += " [" + field + "]";
    out += ": " + message;
    return out;
  }

  errc code_;
  std::string message_;
  std::string field_;
  std::size_t line_;
};

}  // namespace trustbench
