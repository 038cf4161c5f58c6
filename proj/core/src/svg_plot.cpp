#include "cmil/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cmil {

namespace {

constexpr int kMarginLeft = 70, kMarginRight = 20, kMarginTop = 40, kMarginBottom = 45;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg_lines(const std::string& title, const std::vector<PlotSeries>& series,
                             bool normalize_each, int width, int height) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: x/y length mismatch");
    if (s.x.empty()) throw std::invalid_argument("plot: empty series '" + s.label + "'");
  }

  std::vector<PlotSeries> drawn = series;
  if (normalize_each) {
    for (PlotSeries& s : drawn) {
      const auto [lo, hi] = std::minmax_element(s.y.begin(), s.y.end());
      const double span = *hi - *lo;
      for (double& v : s.y) v = span > 0.0 ? (v - *lo) / span : 0.5;
    }
  }

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const PlotSeries& s : drawn)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }

  const double px0 = kMarginLeft, px1 = width - kMarginRight;
  const double py0 = height - kMarginBottom, py1 = kMarginTop;
  auto sx = [&](double x) { return px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0); };
  auto sy = [&](double y) { return py0 + (y - y_lo) / (y_hi - y_lo) * (py1 - py0); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << escape(title) << "</text>\n";

  // Axes with 5 ticks each.
  out << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(py0) << "\" x2=\"" << fmt(px1)
      << "\" y2=\"" << fmt(py0) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(py0) << "\" x2=\"" << fmt(px0)
      << "\" y2=\"" << fmt(py1) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    out << "<text x=\"" << fmt(sx(fx)) << "\" y=\"" << fmt(py0 + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt_tick(fx) << "</text>\n"
        << "<text x=\"" << fmt(px0 - 6) << "\" y=\"" << fmt(sy(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_tick(fy)
        << "</text>\n";
  }

  for (std::size_t si = 0; si < drawn.size(); ++si) {
    const PlotSeries& s = drawn[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out << ' ';
      out << fmt(sx(s.x[i])) << ',' << fmt(sy(s.y[i]));
    }
    out << "\"/>\n";
    const double ly = kMarginTop + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << fmt(px1 - 110) << "\" y1=\"" << fmt(ly) << "\" x2=\""
        << fmt(px1 - 90) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << fmt(px1 - 85) << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<PlotSeries>& series, bool normalize_each) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("plot: cannot open " + path);
  out << render_svg_lines(title, series, normalize_each);
}

}  // namespace cmil
