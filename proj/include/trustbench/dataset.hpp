#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustbench/error.hpp"
#include "trustbench/random.hpp"

namespace trustbench {

/// Row-major numeric feature matrix with one target per row. Classification
/// targets are numeric class ids; 1 is the positive class.
struct dataset {
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<std::string> feature_names;
  std::string target_name;

  std::size_t rows() const noexcept { return targets.size(); }
  std::size_t cols() const noexcept { return feature_names.size(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * cols(), cols()};
  }

  bool operator==(const dataset&) const = default;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses comma-separated text with a header row; the last column is the
/// target. Cells must be finite decimal numbers ('.' separator). Raw values
/// are stored; normalization happens at fit time.
inline dataset load_dataset_csv(std::string_view bytes) {
  dataset ds;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!bytes.empty()) {
    ++line_no;
    const auto nl = bytes.find('\n');
    std::string_view line = bytes.substr(0, nl);
    bytes = nl == std::string_view::npos ? std::string_view{} : bytes.substr(nl + 1);
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);

    if (!have_header) {
      if (cells.size() < 2)
        throw error(errc::parse, "header needs at least one feature and a target", "", line_no);
      for (std::size_t c = 0; c + 1 < cells.size(); ++c)
        ds.feature_names.emplace_back(detail::trim(cells[c]));
      ds.target_name = std::string(detail::trim(cells.back()));
      have_header = true;
      continue;
    }
    if (cells.size() != ds.cols() + 1)
      throw error(errc::parse,
                  "expected " + std::to_string(ds.cols() + 1) + " columns, got " +
                      std::to_string(cells.size()),
                  "", line_no);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto cell = detail::trim(cells[c]);
      const std::string column = c < ds.cols() ? ds.feature_names[c] : ds.target_name;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
        throw error(errc::parse, "non-numeric cell '" + std::string(cell) + "'", column, line_no);
      if (!std::isfinite(v)) throw error(errc::parse, "non-finite value", column, line_no);
      if (c < ds.cols()) {
        ds.features.push_back(v);
      } else {
        ds.targets.push_back(v);
      }
    }
  }
  if (!have_header) throw error(errc::parse, "missing header row");
  if (ds.rows() == 0) throw error(errc::parse, "no data rows");
  return ds;
}

inline std::string write_dataset_csv(const dataset& ds) {
  auto num = [](double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  std::string out;
  for (const auto& name : ds.feature_names) out += name + ",";
  out += ds.target_name + "\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (double v : ds.row(i)) out += num(v) + ",";
    out += num(ds.targets[i]) + "\n";
  }
  return out;
}

inline dataset subset(const dataset& ds, std::span<const std::size_t> indices) {
  dataset out;
  out.feature_names = ds.feature_names;
  out.target_name = ds.target_name;
  out.features.reserve(indices.size() * ds.cols());
  out.targets.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto r = ds.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.targets.push_back(ds.targets[i]);
  }
  return out;
}

struct split_spec {
  double train_fraction = 0.6;
  double calibration_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = default_seed;
};

struct dataset_split {
  dataset train;
  dataset calibration;
  dataset test;
};

/// Seeded shuffle, then contiguous proper-training / calibration / test
/// blocks of round(n * fraction) rows (test takes the remainder).
inline dataset_split split(const dataset& ds, const split_spec& spec) {
  const double fractions[] = {spec.train_fraction, spec.calibration_fraction, spec.test_fraction};
  for (double f : fractions)
    if (!(f > 0.0)) throw error(errc::invalid_spec, "split fractions must be > 0", "split");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw error(errc::invalid_spec, "split fractions must sum to 1", "split");

  const std::size_t n = ds.rows();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[0]));
  const auto n_cal = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
  if (n_train == 0 || n_cal == 0 || n_train + n_cal >= n)
    throw error(errc::insufficient_data,
                std::to_string(n) + " rows cannot fill three nonempty parts");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng gen(spec.seed);
  shuffle(std::span<std::size_t>(order), gen);

  const std::span<const std::size_t> all(order);
  return {subset(ds, all.subspan(0, n_train)), subset(ds, all.subspan(n_train, n_cal)),
          subset(ds, all.subspan(n_train + n_cal))};
}

}  // namespace trustbench
