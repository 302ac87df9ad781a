#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advp/harness/metrics.hpp"

namespace advp::harness {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), drawn in order
};

/// Deterministic SVG line chart. With no points only the axes are drawn.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

/// One labelled run (usually one metrics.csv).
struct PlotInput {
  std::string label;
  std::vector<MetricRow> rows;
};

/// Writes returns.svg (mean return per run and split, averaged over agents),
/// losses.svg (loss components per run, train rows averaged over agents) and
/// probe.svg (kl_probe per run and split) into out_dir. Returns the paths.
std::vector<std::string> emit_plots(const std::vector<PlotInput>& runs, const std::string& out_dir);

}  // namespace advp::harness
