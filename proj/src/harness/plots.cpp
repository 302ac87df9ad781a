#include "advp/harness/plots.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace advp::harness {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 180, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v, int precision = 4) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[48];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
  if (ec != std::errc()) return "0";
  return std::string(buf, p);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi) {
  if (lo > hi) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  const Range xr = padded(x0, x1), yr = padded(y0, y1);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  o += "<g stroke=\"black\" stroke-width=\"1\">\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) +
       "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kTop + ph) + "\"/>\n";
  o += "</g>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / kTicks;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / kTicks;
    o += "<line x1=\"" + num(sx(fx)) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(sx(fx)) +
         "\" y2=\"" + num(kTop + ph + 4) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(sx(fx)) + "\" y=\"" + num(kTop + ph + 16) +
         "\" text-anchor=\"middle\">" + num(fx, 3) + "</text>\n";
    o += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(sy(fy)) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(sy(fy)) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(sy(fy) + 4) +
         "\" text-anchor=\"end\">" + num(fy, 3) + "</text>\n";
  }
  o += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n";

  std::size_t legend_row = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    if (s.points.empty()) continue;
    const std::string color = kColors[i % std::size(kColors)];
    if (s.points.size() == 1) {
      o += "<circle cx=\"" + num(sx(s.points[0].first)) + "\" cy=\"" +
           num(sy(s.points[0].second)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    } else {
      o += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < s.points.size(); ++k)
        o += (k ? " " : "") + num(sx(s.points[k].first), 6) + "," + num(sy(s.points[k].second), 6);
      o += "\"/>\n";
    }
    const double ly = kTop + 14 * static_cast<double>(legend_row++);
    o += "<line x1=\"" + num(kLeft + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" +
         num(kLeft + pw + 32) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + num(kLeft + pw + 36) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.name) +
         "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

namespace {

// Mean of `field` over agents at each step, for rows passing `keep`.
template <class Field, class Keep>
std::vector<std::pair<double, double>> averaged(const std::vector<MetricRow>& rows, Field field,
                                                Keep keep) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const MetricRow& r : rows)
    if (keep(r)) {
      auto& a = acc[r.step];
      a.first += field(r);
      ++a.second;
    }
  std::vector<std::pair<double, double>> out;
  for (const auto& [step, a] : acc)
    out.emplace_back(static_cast<double>(step), a.first / static_cast<double>(a.second));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<PlotInput>& runs,
                                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<Series> returns, losses, probe;
  for (const PlotInput& run : runs) {
    for (envgen::Split split : {envgen::Split::train, envgen::Split::full}) {
      auto on_split = [split](const MetricRow& r) { return r.split == split; };
      const std::string name = run.label + " " + std::string(envgen::to_string(split));
      returns.push_back({name, averaged(run.rows, [](const MetricRow& r) { return r.mean_return; },
                                        on_split)});
      probe.push_back(
          {name, averaged(run.rows, [](const MetricRow& r) { return r.kl_probe; }, on_split)});
    }
    auto train = [](const MetricRow& r) { return r.split == envgen::Split::train; };
    const std::pair<const char*, double MetricRow::*> components[] = {
        {"l_rl", &MetricRow::l_rl},
        {"d_own", &MetricRow::d_own},
        {"d_other", &MetricRow::d_other},
        {"l_kl", &MetricRow::l_kl}};
    for (const auto& [cname, member] : components)
      losses.push_back({run.label + " " + cname,
                        averaged(run.rows, [m = member](const MetricRow& r) { return r.*m; },
                                 train)});
  }
  const std::vector<std::pair<std::string, std::string>> files = {
      {"returns.svg", line_chart_svg("Mean return", "environment steps", "return", returns)},
      {"losses.svg", line_chart_svg("Loss components", "environment steps", "value", losses)},
      {"probe.svg", line_chart_svg("Robustness probe", "environment steps", "mean KL", probe)}};
  std::vector<std::string> paths;
  for (const auto& [name, svg] : files) {
    const fs::path p = fs::path(out_dir) / name;
    write_file(p, svg);
    paths.push_back(p.string());
  }
  return paths;
}

}  // namespace advp::harness
