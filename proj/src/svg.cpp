#include "cosrec/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cosrec/errors.hpp"

namespace cosrec {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double to_axis(double v, bool log_scale) {
  return log_scale ? std::log10(v) : v;
}

}  // namespace

void write_svg_line_plot(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series, bool log_x, bool log_y) {
  double x_min = HUGE_VAL, x_max = -HUGE_VAL, y_min = HUGE_VAL, y_max = -HUGE_VAL;
  for (const auto& s : series) {
    for (double v : s.x) {
      const double a = to_axis(v, log_x);
      x_min = std::min(x_min, a);
      x_max = std::max(x_max, a);
    }
    for (double v : s.y) {
      const double a = to_axis(v, log_y);
      y_min = std::min(y_min, a);
      y_max = std::max(y_max, a);
    }
  }
  if (!(x_min <= x_max) || !(y_min <= y_max)) throw UsageError("svg plot: no data points");
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  auto px = [&](double v) {
    return kLeft + (to_axis(v, log_x) - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight);
  };
  auto py = [&](double v) {
    return kHeight - kBottom -
           (to_axis(v, log_y) - y_min) / (y_max - y_min) * (kHeight - kTop - kBottom);
  };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write plot: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
      << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << (log_x ? " (log)" : "")
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (kTop + kHeight - kBottom) / 2 << ")\">" << y_label << (log_y ? " (log)" : "")
      << "</text>\n";

  // Axis extremes as tick labels.
  auto from_axis = [](double a, bool log_scale) { return log_scale ? std::pow(10.0, a) : a; };
  out << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(from_axis(x_min, log_x))
      << "</text>\n";
  out << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(from_axis(x_max, log_x))
      << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << kHeight - kBottom
      << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(from_axis(y_min, log_y))
      << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4
      << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(from_axis(y_max, log_y))
      << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i > 0) out << " ";
      out << fmt(px(series[s].x[i])) << "," << fmt(py(series[s].y[i]));
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      out << "<circle cx=\"" << fmt(px(series[s].x[i])) << "\" cy=\"" << fmt(py(series[s].y[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kWidth - kRight - 140 << "\" y=\"" << kTop + 14 + 16 * s
        << "\" font-size=\"12\" fill=\"" << color << "\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw DataError("short write on plot: " + path);
}

}  // namespace cosrec
