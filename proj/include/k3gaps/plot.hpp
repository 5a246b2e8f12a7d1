#pragma once

#include <string>
#include <utility>
#include <vector>

namespace k3gaps::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
  bool markers = true;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  double width = 640;
  double height = 420;
  std::string timestamp;  // written as a comment when nonempty
};

// Axes with nice ticks, polylines, optional markers and a legend.
std::string line_plot_svg(const LinePlot& plot);

struct CirclePoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  bool hollow = false;
};

// The unit circle (projectivized null cone) with marked points.
std::string circle_plot_svg(const std::string& title, const std::vector<CirclePoint>& filled,
                            const std::vector<CirclePoint>& hollow, const std::string& timestamp = "");

// RFC 4180 CSV: fields quoted when they contain a comma, quote or line break,
// records terminated by CRLF.
std::string csv_field(const std::string& s);
std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

// Shortest round-trip decimal text for a double.
std::string number(double v);

}  // namespace k3gaps::plot
