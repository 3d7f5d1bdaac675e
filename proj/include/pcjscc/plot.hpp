// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "pcjscc/common.hpp"

namespace pcjscc {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline const char* plot_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#17becf", "#8c564b", "#e377c2"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline double nice_step(double range, int target_ticks) {
  if (range <= 0 || !std::isfinite(range)) return 1.0;
  const double raw = range / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step;
  if (norm <= 1.5) step = 1.0;
  else if (norm <= 3.5) step = 2.0;
  else if (norm <= 7.5) step = 5.0;
  else step = 10.0;
  return step * mag;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

/// Minimal deterministic SVG line chart. Non-finite sample values (e.g. the
/// +inf PSNR sentinel) break the polyline instead of skewing the axes.
inline void write_line_plot_svg(const std::string& path,
                                const std::string& title,
                                const std::string& xlabel,
                                const std::string& ylabel,
                                const std::vector<PlotSeries>& series) {
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) {
    x0 = 0; x1 = 1; y0 = 0; y1 = 1;
  }
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
  const double ypad = 0.05 * (y1 - y0);
  y0 -= ypad;
  y1 += ypad;

  const double width = 880, height = 560;
  const double ml = 80, mr = 200, mt = 50, mb = 60;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" "
         "font-size=\"18\">" << title << "</text>\n";

  // axes + ticks
  const double xstep = detail::nice_step(x1 - x0, 6);
  const double ystep = detail::nice_step(y1 - y0, 6);
  out << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + 1e-12; x += xstep)
    out << "<line x1=\"" << sx(x) << "\" y1=\"" << mt << "\" x2=\"" << sx(x)
        << "\" y2=\"" << mt + ph << "\"/>\n";
  for (double y = std::ceil(y0 / ystep) * ystep; y <= y1 + 1e-12; y += ystep)
    out << "<line x1=\"" << ml << "\" y1=\"" << sy(y) << "\" x2=\"" << ml + pw
        << "\" y2=\"" << sy(y) << "\"/>\n";
  out << "</g>\n<g font-size=\"12\" fill=\"#333333\">\n";
  for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + 1e-12; x += xstep)
    out << "<text x=\"" << sx(x) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\">" << detail::tick_label(x) << "</text>\n";
  for (double y = std::ceil(y0 / ystep) * ystep; y <= y1 + 1e-12; y += ystep)
    out << "<text x=\"" << ml - 8 << "\" y=\"" << sy(y) + 4
        << "\" text-anchor=\"end\">" << detail::tick_label(y) << "</text>\n";
  out << "</g>\n"
      << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\" font-size=\"14\">" << xlabel
      << "</text>\n"
      << "<text x=\"20\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 "
         "20 " << mt + ph / 2 << ")\">" << ylabel << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = detail::plot_color(si);
    std::string d;
    bool pen_down = false;
    for (const auto& [x, y] : series[si].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        pen_down = false;
        continue;
      }
      d += pen_down ? " L" : " M";
      d += fmt_double(sx(x)) + ' ' + fmt_double(sy(y));
      pen_down = true;
    }
    if (!d.empty())
      out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
    for (const auto& [x, y] : series[si].points)
      if (std::isfinite(x) && std::isfinite(y))
        out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y)
            << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    const double lx = ml + pw + 16, ly = mt + 16 + 22 * double(si);
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 24
        << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << lx + 30 << "\" y=\"" << ly + 4
        << "\" font-size=\"13\">" << series[si].label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Matrix heatmap of absolute values clipped to the fixed scale [0, 1]
/// (white -> dark blue), with a colorbar.
inline void write_heatmap_svg(const std::string& path,
                              const std::string& title, const Mat& values) {
  const auto n_rows = values.rows(), n_cols = values.cols();
  if (n_rows < 1 || n_cols < 1)
    throw std::invalid_argument("write_heatmap_svg: empty matrix");
  const double cell = std::max(2.0, std::min(24.0, 420.0 / double(n_rows)));
  const double ml = 60, mt = 50;
  const double width = ml + cell * double(n_cols) + 120;
  const double height = mt + cell * double(n_rows) + 40;
  auto ramp = [](double v) {
    v = std::clamp(std::abs(v), 0.0, 1.0);
    // white (255,255,255) -> dark blue (8,48,107)
    const int r = static_cast<int>(std::lround(255 + v * (8 - 255)));
    const int g = static_cast<int>(std::lround(255 + v * (48 - 255)));
    const int b = static_cast<int>(std::lround(255 + v * (107 - 255)));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << ml + cell * double(n_cols) / 2
      << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  for (Eigen::Index i = 0; i < n_rows; ++i)
    for (Eigen::Index j = 0; j < n_cols; ++j)
      out << "<rect x=\"" << ml + cell * double(j) << "\" y=\""
          << mt + cell * double(i) << "\" width=\"" << cell << "\" height=\""
          << cell << "\" fill=\"" << ramp(values(i, j)) << "\"/>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\""
      << cell * double(n_cols) << "\" height=\"" << cell * double(n_rows)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  // colorbar
  const double bx = ml + cell * double(n_cols) + 30, bw = 18;
  const double bh = cell * double(n_rows);
  const int strips = 64;
  for (int s = 0; s < strips; ++s) {
    const double v = 1.0 - (s + 0.5) / strips;
    out << "<rect x=\"" << bx << "\" y=\"" << mt + bh * s / strips
        << "\" width=\"" << bw << "\" height=\"" << bh / strips + 0.5
        << "\" fill=\"" << ramp(v) << "\"/>\n";
  }
  out << "<rect x=\"" << bx << "\" y=\"" << mt << "\" width=\"" << bw
      << "\" height=\"" << bh << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << bx + bw + 6 << "\" y=\"" << mt + 10
      << "\" font-size=\"12\">1.0</text>\n"
      << "<text x=\"" << bx + bw + 6 << "\" y=\"" << mt + bh
      << "\" font-size=\"12\">0.0</text>\n</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pcjscc
