#ifndef ESCAPE_ATLAS_SVG_HPP
#define ESCAPE_ATLAS_SVG_HPP

// Minimal SVG plots: one axes box, ticks, polylines, point clouds and raster
// masks. Enough to eyeball an artifact; the CSV files carry the data.

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace escape_atlas::svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

class Plot {
 public:
  Plot(double x_lo, double x_hi, double y_lo, double y_hi, std::string x_label, std::string y_label,
       int width = 640, int height = 560)
      : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi), w_(width), h_(height) {
    x_label_ = std::move(x_label);
    y_label_ = std::move(y_label);
  }

  void title(const std::string& t) { title_ = t; }

  void polyline(const std::vector<Point>& pts, const std::string& color, double width = 1.5, bool dashed = false) {
    if (pts.size() < 2) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << '"';
    if (dashed) body_ << " stroke-dasharray=\"6,4\"";
    body_ << " points=\"";
    for (const auto& p : pts) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
      body_ << fmt(px(p.x)) << ',' << fmt(py(p.y)) << ' ';
    }
    body_ << "\"/>\n";
  }

  /// Tiny squares, drawn as a single path.
  void points(const std::vector<Point>& pts, const std::string& color, double size = 1.0) {
    if (pts.empty()) return;
    body_ << "<path fill=\"" << color << "\" stroke=\"none\" d=\"";
    for (const auto& p : pts) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
      body_ << 'M' << fmt(px(p.x) - size / 2) << ' ' << fmt(py(p.y) - size / 2) << "h" << size << "v" << size << "h"
            << -size << "z";
    }
    body_ << "\"/>\n";
  }

  /// Filled cells of a row-major nx by ny mask whose node (i, j) sits at the
  /// linspace coordinates of the given extent. Horizontal runs are merged.
  void mask(const std::vector<unsigned char>& cells, int nx, int ny, double x_lo, double x_hi, double y_lo,
            double y_hi, const std::string& color, double opacity = 1.0) {
    const double dx = (x_hi - x_lo) / (nx - 1);
    const double dy = (y_hi - y_lo) / (ny - 1);
    body_ << "<g fill=\"" << color << "\" fill-opacity=\"" << opacity << "\" stroke=\"none\" shape-rendering=\"crispEdges\">\n";
    for (int j = 0; j < ny; ++j) {
      int i = 0;
      while (i < nx) {
        if (!cells[static_cast<std::size_t>(j) * nx + i]) {
          ++i;
          continue;
        }
        int k = i;
        while (k < nx && cells[static_cast<std::size_t>(j) * nx + k]) ++k;
        const double xa = px(x_lo + (i - 0.5) * dx);
        const double xb = px(x_lo + (k - 0.5) * dx);
        const double ya = py(y_lo + (j + 0.5) * dy);
        const double yb = py(y_lo + (j - 0.5) * dy);
        body_ << "<rect x=\"" << fmt(xa) << "\" y=\"" << fmt(ya) << "\" width=\"" << fmt(xb - xa) << "\" height=\""
              << fmt(yb - ya) << "\"/>\n";
        i = k;
      }
    }
    body_ << "</g>\n";
  }

  void text(const std::string& s, double x, double y, const std::string& color = "#000") {
    body_ << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(py(y)) << "\" font-size=\"12\" fill=\"" << color << "\">"
          << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
       << w_ << ' ' << h_ << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<defs><clipPath id=\"plot\"><rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << iw() << "\" height=\""
       << ih() << "\"/></clipPath></defs>\n";
    os << "<g clip-path=\"url(#plot)\">\n" << body_.str() << "</g>\n";
    os << axes();
    os << "</svg>\n";
    return os.str();
  }

 private:
  static constexpr double kLeft = 70;
  static constexpr double kRight = 20;
  static constexpr double kTop = 30;
  static constexpr double kBottom = 50;

  double iw() const { return w_ - kLeft - kRight; }
  double ih() const { return h_ - kTop - kBottom; }
  double px(double x) const { return kLeft + (x - x_lo_) / (x_hi_ - x_lo_) * iw(); }
  double py(double y) const { return kTop + (y_hi_ - y) / (y_hi_ - y_lo_) * ih(); }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
  static std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out += c;
    }
    return out;
  }

  static std::vector<double> ticks(double lo, double hi) {
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(v);
    return t;
  }

  std::string axes() const {
    std::ostringstream os;
    os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << iw() << "\" height=\"" << ih()
       << "\" fill=\"none\" stroke=\"#000\"/>\n";
    os << "<g font-size=\"11\" font-family=\"sans-serif\">\n";
    for (double v : ticks(x_lo_, x_hi_)) {
      os << "<line x1=\"" << fmt(px(v)) << "\" y1=\"" << fmt(kTop + ih()) << "\" x2=\"" << fmt(px(v)) << "\" y2=\""
         << fmt(kTop + ih() + 5) << "\" stroke=\"#000\"/>";
      os << "<text x=\"" << fmt(px(v)) << "\" y=\"" << fmt(kTop + ih() + 18) << "\" text-anchor=\"middle\">"
         << tick_label(v) << "</text>\n";
    }
    for (double v : ticks(y_lo_, y_hi_)) {
      os << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << kLeft << "\" y2=\""
         << fmt(py(v)) << "\" stroke=\"#000\"/>";
      os << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(py(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
         << "</text>\n";
    }
    os << "<text x=\"" << fmt(kLeft + iw() / 2) << "\" y=\"" << fmt(h_ - 12.0) << "\" text-anchor=\"middle\">"
       << escape(x_label_) << "</text>\n";
    os << "<text x=\"16\" y=\"" << fmt(kTop + ih() / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << fmt(kTop + ih() / 2) << ")\">" << escape(y_label_) << "</text>\n";
    if (!title_.empty()) {
      os << "<text x=\"" << fmt(kLeft + iw() / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
         << escape(title_) << "</text>\n";
    }
    os << "</g>\n";
    return os.str();
  }

  double x_lo_, x_hi_, y_lo_, y_hi_;
  int w_, h_;
  std::string x_label_;
  std::string y_label_;
  std::string title_;
  std::ostringstream body_;
};

}  // namespace escape_atlas::svg

#endif  // ESCAPE_ATLAS_SVG_HPP
