#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "grid.hpp"

namespace hazbench {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  double width = 1.5;
  double opacity = 1.0;
  bool dashed = false;
};

struct SvgPlot {
  std::string title;
  std::string xlabel = "time";
  std::string ylabel = "hazard";
  std::vector<SvgSeries> series;
  int width = 720;
  int height = 440;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

/// Round tick step (1, 2 or 5 times a power of ten) giving about n ticks.
inline double nice_step(double span, int n) {
  const double raw = span / std::max(1, n);
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * p >= raw) return m * p;
  }
  return 10.0 * p;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace detail

/// Render a line plot; non-finite points break the line.
inline std::string render_svg(const SvgPlot& p) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  if (y0 > 0.0 && y0 < 0.3 * y1) y0 = 0.0;
  const double ml = 64, mr = 150, mt = 36, mb = 48;
  const double pw = p.width - ml - mr, ph = p.height - mt - mb;
  auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto Y = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width << "\" height=\"" << p.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << ml << "\" y=\"20\" font-size=\"14\">" << detail::svg_escape(p.title) << "</text>\n";
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const double xs = detail::nice_step(x1 - x0, 6), ys = detail::nice_step(y1 - y0, 5);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
    o << "<line x1=\"" << X(t) << "\" y1=\"" << mt + ph << "\" x2=\"" << X(t) << "\" y2=\"" << mt + ph + 4
      << "\" stroke=\"#444\"/><text x=\"" << X(t) << "\" y=\"" << mt + ph + 17 << "\" text-anchor=\"middle\">"
      << detail::fmt(std::abs(t) < 1e-12 * xs ? 0.0 : t) << "</text>\n";
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
    o << "<line x1=\"" << ml - 4 << "\" y1=\"" << Y(t) << "\" x2=\"" << ml << "\" y2=\"" << Y(t)
      << "\" stroke=\"#444\"/><text x=\"" << ml - 7 << "\" y=\"" << Y(t) + 4 << "\" text-anchor=\"end\">"
      << detail::fmt(std::abs(t) < 1e-12 * ys ? 0.0 : t) << "</text>\n";
  }
  o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << p.height - 10 << "\" text-anchor=\"middle\">"
    << detail::svg_escape(p.xlabel) << "</text>\n";
  o << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::svg_escape(p.ylabel) << "</text>\n";

  int legend = 0;
  for (const auto& s : p.series) {
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        pen = false;
        continue;
      }
      path += (pen ? " L" : " M") + detail::fmt(X(s.x[i])) + "," + detail::fmt(Y(s.y[i]));
      pen = true;
    }
    if (path.empty()) continue;
    o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width
      << "\" stroke-opacity=\"" << s.opacity << "\"" << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << "/>\n";
    if (!s.label.empty()) {
      const double ly = mt + 12 + 18 * legend++;
      o << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34 << "\" y2=\"" << ly
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"5,4\"" : "")
        << "/><text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4 << "\">" << detail::svg_escape(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_svg(const std::string& path, const SvgPlot& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << render_svg(p);
}

/// Curve as a polyline: bin midpoints for hazards and log ratios, right
/// edges (with the start value prepended) for step kinds. Missing bins are gaps.
inline SvgSeries curve_series(const HazardCurve& c, const std::string& label, const std::string& color,
                              const std::vector<double>* values = nullptr) {
  const auto& v = values ? *values : c.values;
  SvgSeries s{label, {}, {}, color};
  const bool step = c.kind == CurveKind::cumulative_hazard || c.kind == CurveKind::survival;
  if (step) {
    s.x.push_back(c.grid.start());
    s.y.push_back(c.kind == CurveKind::survival ? 1.0 : 0.0);
  }
  for (std::size_t j = 0; j < v.size(); ++j) {
    s.x.push_back(step ? c.grid.upper(j) : c.grid.midpoint(j));
    s.y.push_back(c.is_missing(j) ? kNaN : v[j]);
  }
  return s;
}

/// Estimate with dashed pointwise bounds when present.
inline SvgPlot curve_plot(const HazardCurve& c, const std::string& title) {
  SvgPlot p;
  p.title = title;
  p.ylabel = to_string(c.kind);
  p.series.push_back(curve_series(c, "estimate", "#1f77b4"));
  if (c.has_bounds()) {
    auto lo = curve_series(c, "bounds", "#1f77b4", &c.lower);
    auto hi = curve_series(c, "", "#1f77b4", &c.upper);
    lo.dashed = hi.dashed = true;
    lo.width = hi.width = 1.0;
    p.series.push_back(std::move(lo));
    p.series.push_back(std::move(hi));
  }
  return p;
}

/// Replicate estimates in translucent grey with the truth and replicate mean on top.
inline SvgPlot cloud_plot(const std::vector<HazardCurve>& reps, const std::vector<double>& truth, const TimeGrid& grid,
                          const std::string& title) {
  SvgPlot p;
  p.title = title;
  for (const auto& c : reps) {
    auto s = curve_series(c, "", "#777777");
    s.width = 0.8;
    s.opacity = 0.25;
    p.series.push_back(std::move(s));
  }
  std::vector<double> mean(grid.bins(), 0.0), cnt(grid.bins(), 0.0);
  for (const auto& c : reps) {
    for (std::size_t j = 0; j < grid.bins(); ++j) {
      if (!c.is_missing(j) && std::isfinite(c.values[j])) {
        mean[j] += c.values[j];
        cnt[j] += 1.0;
      }
    }
  }
  for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = cnt[j] > 0.0 ? mean[j] / cnt[j] : kNaN;
  const auto mids = grid.midpoints();
  p.series.push_back(SvgSeries{"mean", mids, mean, "#d62728", 2.0});
  p.series.push_back(SvgSeries{"truth", mids, truth, "#000000", 2.0});
  return p;
}

}  // namespace hazbench
