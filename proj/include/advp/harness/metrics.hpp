#pragma once

#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advp/envgen/level_family.hpp"

namespace advp::harness {

/// One evaluation of one agent on one split. Loss columns repeat the agent's
/// most recent update; kl_probe is measured on levels of the row's split.
struct MetricRow {
  std::size_t step = 0;
  int agent = 1;
  envgen::Split split = envgen::Split::train;
  double mean_return = 0.0;
  double std_return = 0.0;
  double l_rl = 0.0;
  double d_own = 0.0;
  double d_other = 0.0;
  double l_kl = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double kl_probe = 0.0;

  bool operator==(const MetricRow&) const = default;
};

inline constexpr const char* kMetricSchema = "# schema=advp-metrics/1";

const std::vector<std::string>& metric_columns();
/// Schema line plus column header, each newline-terminated.
std::string metric_preamble();
std::string format_row(const MetricRow& row);

/// Parse failures carry the 1-based line number.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Accepts an empty text, or the preamble followed by rows. Rejects a
/// different schema, wrong column counts, bad numbers and step counts that
/// decrease within an (agent, split) stream.
std::vector<MetricRow> parse_metrics(const std::string& text);
std::vector<MetricRow> read_metrics(const std::string& path);

/// Append-only writer; each row is flushed as it is written.
class MetricWriter {
 public:
  /// truncate=true starts a fresh file with the preamble. Otherwise the file
  /// is appended to (and receives the preamble if it is empty or missing).
  MetricWriter(const std::string& path, bool truncate);
  void write(const MetricRow& row);

 private:
  std::string path_;
  std::ofstream out_;
};

/// Rewrites `path` keeping only rows accepted by `keep` (resume support).
template <class Pred>
void filter_metrics(const std::string& path, Pred keep) {
  std::vector<MetricRow> rows = read_metrics(path);
  MetricWriter w(path, true);
  for (const MetricRow& r : rows)
    if (keep(r)) w.write(r);
}

}  // namespace advp::harness
