#include "k3gaps/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace k3gaps::plot {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

// Ticks at 1, 2 or 5 times a power of ten.
std::vector<double> ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= target) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

std::string tick_label(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

std::string header(double w, double h, const std::string& timestamp) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(w, 0) << "\" height=\"" << fixed(h, 0)
      << "\" viewBox=\"0 0 " << fixed(w, 0) << ' ' << fixed(h, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!timestamp.empty()) out << "<!-- generated " << escape(timestamp) << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

}  // namespace

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string line_plot_svg(const LinePlot& plot) {
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = plot.width - left - right, ph = plot.height - top - bottom;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : plot.series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream out;
  out << header(plot.width, plot.height, plot.timestamp);
  out << "<text x=\"" << fixed(plot.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(plot.title) << "</text>\n";
  out << "<g stroke=\"#ccc\" stroke-width=\"0.5\">\n";
  for (double t : ticks(x0, x1))
    out << "<line x1=\"" << fixed(sx(t)) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(sx(t)) << "\" y2=\""
        << fixed(top + ph) << "\"/>\n";
  for (double t : ticks(y0, y1))
    out << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(sy(t)) << "\" x2=\"" << fixed(left + pw) << "\" y2=\""
        << fixed(sy(t)) << "\"/>\n";
  out << "</g>\n";
  out << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw) << "\" height=\""
      << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(x0, x1))
    out << "<text x=\"" << fixed(sx(t)) << "\" y=\"" << fixed(top + ph + 16) << "\" text-anchor=\"middle\">"
        << tick_label(t) << "</text>\n";
  for (double t : ticks(y0, y1))
    out << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(sy(t) + 4) << "\" text-anchor=\"end\">"
        << tick_label(t) << "</text>\n";
  out << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(plot.height - 10) << "\" text-anchor=\"middle\">"
      << escape(plot.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << fixed(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(plot.y_label) << "</text>\n";

  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const Series& s = plot.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::ostringstream pts;
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      pts << fixed(sx(x)) << ',' << fixed(sy(y)) << ' ';
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << pts.str() << "\"/>\n";
    if (s.markers) {
      for (auto [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        out << "<circle cx=\"" << fixed(sx(x)) << "\" cy=\"" << fixed(sy(y)) << "\" r=\"3\" fill=\"" << color
            << "\"/>\n";
      }
    }
    const double ly = top + 14 + 16 * static_cast<double>(i);
    out << "<line x1=\"" << fixed(left + 10) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\"" << fixed(left + 30)
        << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    out << "<text x=\"" << fixed(left + 36) << "\" y=\"" << fixed(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string circle_plot_svg(const std::string& title, const std::vector<CirclePoint>& filled,
                            const std::vector<CirclePoint>& hollow, const std::string& timestamp) {
  const double size = 480, c = size / 2, r = 190;
  std::ostringstream out;
  out << header(size, size + 20, timestamp);
  out << "<text x=\"" << fixed(c) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  out << "<circle cx=\"" << fixed(c) << "\" cy=\"" << fixed(c + 20) << "\" r=\"" << fixed(r)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<circle cx=\"" << fixed(c) << "\" cy=\"" << fixed(c + 20) << "\" r=\"2\" fill=\"black\"/>\n";
  for (const CirclePoint& p : hollow) {
    out << "<circle cx=\"" << fixed(c + r * p.x) << "\" cy=\"" << fixed(c + 20 - r * p.y)
        << "\" r=\"4\" fill=\"none\" stroke=\"#888\"><title>" << escape(p.label) << "</title></circle>\n";
  }
  std::size_t i = 0;
  for (const CirclePoint& p : filled) {
    const char* color = kPalette[i++ % std::size(kPalette)];
    const double x = c + r * p.x, y = c + 20 - r * p.y;
    out << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"5\" fill=\"" << color << "\"><title>"
        << escape(p.label) << "</title></circle>\n";
    out << "<text x=\"" << fixed(x + 8) << "\" y=\"" << fixed(y - 6) << "\" fill=\"" << color << "\">"
        << escape(p.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto record = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += csv_field(fields[i]);
    }
    out += "\r\n";
  };
  record(header);
  for (const auto& r : rows) record(r);
  return out;
}

}  // namespace k3gaps::plot
