#pragma once

#include <string>
#include <vector>

namespace cmil {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal dependency-free SVG line chart with deterministic bytes. With
// normalize_each, every series is min-max scaled to [0, 1] before drawing
// (used for the bound-term curves).
std::string render_svg_lines(const std::string& title, const std::vector<PlotSeries>& series,
                             bool normalize_each = false, int width = 860, int height = 480);

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<PlotSeries>& series, bool normalize_each = false);

}  // namespace cmil
