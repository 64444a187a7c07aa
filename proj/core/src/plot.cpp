#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcritic/errors.hpp"
#include "gradcritic/harness.hpp"
#include "gradcritic/stats.hpp"

namespace gradcritic {
namespace {

using Table = std::vector<std::vector<std::string>>;

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) out.push_back(cell);
  return out;
}

// One series: x values with mean and 95% half-width at each x.
struct Series {
  std::string label;
  std::vector<double> x, mean, lo, hi;
};

Series band(const std::string& label, const std::map<double, std::vector<double>>& groups) {
  Series s;
  s.label = label;
  for (const auto& [x, ys] : groups) {
    std::vector<double> finite;
    for (double y : ys)
      if (std::isfinite(y)) finite.push_back(y);
    if (finite.empty()) continue;
    const double m = mean(finite);
    const Interval ci = finite.size() > 1 ? t_interval(finite) : Interval{m, m};
    s.x.push_back(x);
    s.mean.push_back(m);
    s.lo.push_back(ci.lo);
    s.hi.push_back(ci.hi);
  }
  return s;
}

struct Panel {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
};

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void draw_panel(std::ostream& out, const Panel& p, double ox, double oy, double w, double h) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.lo[i]);
      y1 = std::max(y1, s.hi[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double ml = 70, mr = 110, mt = 30, mb = 45;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto px = [&](double x) { return ox + ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return oy + mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  out << "<text x=\"" << ox + w / 2 << "\" y=\"" << oy + 18 << "\" text-anchor=\"middle\">" << p.title
      << "</text>\n";
  out << "<rect x=\"" << ox + ml << "\" y=\"" << oy + mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << oy + mt + ph + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << num(xv) << "</text>\n";
    out << "<text x=\"" << ox + ml - 5 << "\" y=\"" << py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
        << num(yv) << "</text>\n";
  }
  out << "<text x=\"" << ox + ml + pw / 2 << "\" y=\"" << oy + h - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << p.xlabel << "</text>\n";
  out << "<text x=\"" << ox + 14 << "\" y=\"" << oy + mt + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 "
      << ox + 14 << ' ' << oy + mt + ph / 2 << ")\" text-anchor=\"middle\">" << p.ylabel << "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const Series& s = p.series[k];
    const char* color = kColors[k % 10];
    if (s.x.empty()) continue;
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.hi[i]) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;) out << px(s.x[i]) << ',' << py(s.lo[i]) << ' ';
    out << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
    out << "\"/>\n";
    if (!s.label.empty())
      out << "<text x=\"" << ox + ml + pw + 8 << "\" y=\"" << oy + mt + 12 + 14 * k << "\" font-size=\"11\" fill=\""
          << color << "\">" << s.label << "</text>\n";
  }
}

std::vector<Panel> bias_variance_panels(const Table& rows) {
  std::map<double, std::vector<double>> bias, var;
  for (const auto& r : rows) {
    const double l = std::stod(r.at(0));
    bias[l].push_back(std::stod(r.at(2)));
    var[l].push_back(std::stod(r.at(3)));
  }
  return {{"squared bias", "lambda", "mean over components", {band("", bias)}},
          {"variance", "lambda", "mean over components", {band("", var)}}};
}

// x_col is the step/iter column, y_col the return; one band per lambda (and variant).
std::vector<Panel> curve_panels(const Table& rows, int x_col, int y_col, int variant_col) {
  std::map<std::string, std::map<double, std::vector<double>>> groups;
  for (const auto& r : rows) {
    std::string key = "lambda=" + num(std::stod(r.at(2)));
    if (variant_col >= 0) key += " " + r.at(variant_col);
    groups[key][std::stod(r.at(x_col))].push_back(std::stod(r.at(y_col)));
  }
  Panel p{"return", variant_col >= 0 ? "iteration" : "step", "return", {}};
  for (const auto& [key, g] : groups) p.series.push_back(band(key, g));
  return {p};
}

}  // namespace

void emit_summary_svg(const std::filesystem::path& csv_path, const std::filesystem::path& out_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open " + csv_path.string());
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("empty CSV: " + csv_path.string());
  Table rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split(line));
  if (rows.empty()) throw ConfigError("CSV has no data rows: " + csv_path.string());

  std::vector<Panel> panels;
  try {
    if (header == "lambda,outer_repeat,bias_sq_mean,variance_mean,n_inner")
      panels = bias_variance_panels(rows);
    else if (header == "step,seed,lambda,return,divergence_flag")
      panels = curve_panels(rows, 0, 3, -1);
    else if (header == "iter,seed,lambda,variant,return")
      panels = curve_panels(rows, 0, 4, 3);
    else
      throw ConfigError("unrecognised CSV header '" + header + "'");
  } catch (const std::logic_error& e) {
    throw ConfigError("malformed CSV row in " + csv_path.string() + ": " + e.what());
  }

  const double w = 520, h = 340;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * panels.size() << "\" height=\"" << h
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(svg, panels[i], w * i, 0, w, h);
  svg << "</svg>\n";
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write " + out_path.string());
  out << svg.str();
}

}  // namespace gradcritic
