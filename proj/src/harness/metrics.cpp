#include "advp/harness/metrics.hpp"

#include <charconv>
#include <map>
#include <sstream>
#include <utility>

#include "advp/harness/text.hpp"

namespace advp::harness {

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "step", "agent", "split", "mean_return", "std_return", "l_rl", "d_own",
      "d_other", "l_kl", "entropy", "clip_fraction", "kl_probe"};
  return cols;
}

std::string metric_preamble() {
  std::string out = std::string(kMetricSchema) + "\n";
  const auto& cols = metric_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out + "\n";
}

std::string format_row(const MetricRow& r) {
  std::string out = std::to_string(r.step) + "," + std::to_string(r.agent) + "," +
                    std::string(envgen::to_string(r.split));
  for (double v : {r.mean_return, r.std_return, r.l_rl, r.d_own, r.d_other, r.l_kl, r.entropy,
                   r.clip_fraction, r.kl_probe})
    out += "," + format_double(v);
  return out + "\n";
}

namespace {

std::size_t parse_count(std::size_t line, const std::string& col, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw CsvError(line, col + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

}  // namespace

std::vector<MetricRow> parse_metrics(const std::string& text) {
  std::vector<MetricRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_schema = false, seen_header = false;
  std::map<std::pair<int, envgen::Split>, std::size_t> last_step;
  const auto& cols = metric_columns();
  const std::string header = split(metric_preamble(), '\n').at(1);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!seen_schema) {
      if (line != kMetricSchema)
        throw CsvError(lineno, "expected '" + std::string(kMetricSchema) + "', got '" + line + "'");
      seen_schema = true;
      continue;
    }
    if (!seen_header) {
      if (line != header) throw CsvError(lineno, "unexpected column header '" + line + "'");
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != cols.size())
      throw CsvError(lineno, "expected " + std::to_string(cols.size()) + " columns, got " +
                                 std::to_string(f.size()));
    MetricRow r;
    r.step = parse_count(lineno, cols[0], f[0]);
    const std::size_t agent = parse_count(lineno, cols[1], f[1]);
    if (agent != 1 && agent != 2) throw CsvError(lineno, "agent must be 1 or 2");
    r.agent = static_cast<int>(agent);
    try {
      r.split = envgen::parse_split(f[2]);
    } catch (const std::exception& e) {
      throw CsvError(lineno, e.what());
    }
    double* dst[] = {&r.mean_return, &r.std_return, &r.l_rl,    &r.d_own,        &r.d_other,
                     &r.l_kl,        &r.entropy,    &r.clip_fraction, &r.kl_probe};
    for (std::size_t i = 0; i < 9; ++i) {
      try {
        *dst[i] = parse_double_strict(f[3 + i]);
      } catch (const std::invalid_argument&) {
        throw CsvError(lineno, cols[3 + i] + ": expected a number, got '" + f[3 + i] + "'");
      }
    }
    const auto key = std::make_pair(r.agent, r.split);
    if (auto it = last_step.find(key); it != last_step.end() && r.step < it->second)
      throw CsvError(lineno, "step decreases within the agent " + f[1] + " " + f[2] + " stream");
    last_step[key] = r.step;
    rows.push_back(r);
  }
  if (seen_schema && !seen_header) throw CsvError(lineno + 1, "missing column header");
  return rows;
}

std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read metrics file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str());
}

MetricWriter::MetricWriter(const std::string& path, bool truncate) : path_(path) {
  bool needs_preamble = truncate;
  if (!truncate) {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    needs_preamble = !probe || probe.tellg() == 0;
  }
  out_.open(path, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app));
  if (!out_) throw std::runtime_error("cannot open metrics file '" + path + "' for writing");
  if (needs_preamble) out_ << metric_preamble();
  out_.flush();
  if (!out_) throw std::runtime_error("write failed on '" + path + "'");
}

void MetricWriter::write(const MetricRow& row) {
  out_ << format_row(row);
  out_.flush();
  if (!out_) throw std::runtime_error("write failed on '" + path_ + "'");
}

}  // namespace advp::harness
