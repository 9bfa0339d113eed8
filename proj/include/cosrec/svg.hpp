#pragma once

#include <string>
#include <vector>

namespace cosrec {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

// Minimal static SVG line plot, log-scaled on request. Deterministic output.
void write_svg_line_plot(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series, bool log_x, bool log_y);

}  // namespace cosrec
