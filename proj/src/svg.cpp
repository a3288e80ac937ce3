#include "sdstab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "sdstab/errors.hpp"

namespace sdstab {

namespace {

/// Fixed two-decimal pixel coordinate, the only float format in geometry.
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Tick label: short but faithful enough for an axis.
std::string tick_label(double v) {
  if (std::fabs(v) < 1e-12) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape_text(const std::string& s) {
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

struct Range {
  double lo = 0.0, hi = 1.0;
  void widen(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

}  // namespace

std::string render_chart(const ChartSpec& spec,
                         const std::vector<Series>& series) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Range xr{kInf, -kInf}, yr{kInf, -kInf};
  for (const auto& s : series)
    for (const auto& [x, y] : s.points)
      if (std::isfinite(x) && std::isfinite(y)) {
        xr.widen(x);
        yr.widen(y);
      }
  if (!(xr.lo <= xr.hi))
    throw ConfigError("cannot render a chart without finite data points");
  // Stems drop to y = 0, so the baseline must be visible.
  for (const auto& s : series)
    if (s.stems && !s.points.empty()) yr.widen(0.0);

  auto pad = [](Range& r) {
    if (r.hi == r.lo) {
      r.lo -= 1.0;
      r.hi += 1.0;
    } else {
      const double margin = 0.05 * (r.hi - r.lo);
      r.lo -= margin;
      r.hi += margin;
    }
  };
  pad(xr);
  pad(yr);

  const double W = spec.width, H = spec.height;
  const double left = 70.0, right = W - 20.0, top = 40.0, bottom = H - 50.0;
  auto X = [&](double x) {
    return left + (x - xr.lo) / (xr.hi - xr.lo) * (right - left);
  };
  auto Y = [&](double y) {
    return bottom - (y - yr.lo) / (yr.hi - yr.lo) * (bottom - top);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
      << spec.width << "\" height=\"" << spec.height << "\" viewBox=\"0 0 "
      << spec.width << " " << spec.height << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\""
      << spec.height << "\" fill=\"#ffffff\"/>\n";
  out << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\""
      << px(right - left) << "\" height=\"" << px(bottom - top)
      << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  // Six evenly spaced ticks per axis with labels and light grid lines.
  for (int i = 0; i <= 5; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double gx = X(fx);
    out << "<line x1=\"" << px(gx) << "\" y1=\"" << px(top) << "\" x2=\""
        << px(gx) << "\" y2=\"" << px(bottom)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << px(gx) << "\" y=\"" << px(bottom + 18.0)
        << "\" font-family=\"sans-serif\" font-size=\"11\" "
           "text-anchor=\"middle\">"
        << escape_text(tick_label(fx)) << "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    const double gy = Y(fy);
    out << "<line x1=\"" << px(left) << "\" y1=\"" << px(gy) << "\" x2=\""
        << px(right) << "\" y2=\"" << px(gy)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << px(left - 6.0) << "\" y=\"" << px(gy + 4.0)
        << "\" font-family=\"sans-serif\" font-size=\"11\" "
           "text-anchor=\"end\">"
        << escape_text(tick_label(fy)) << "</text>\n";
  }

  for (const auto& s : series) {
    if (s.stems) {
      const double y0 = Y(std::max(yr.lo, std::min(yr.hi, 0.0)));
      for (const auto& [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        const double gx = X(x), gy = Y(y);
        out << "<line x1=\"" << px(gx) << "\" y1=\"" << px(y0) << "\" x2=\""
            << px(gx) << "\" y2=\"" << px(gy) << "\" stroke=\"" << s.color
            << "\" stroke-width=\"" << px(s.width) << "\"/>\n";
        out << "<rect x=\"" << px(gx - 2.0) << "\" y=\"" << px(gy - 2.0)
            << "\" width=\"4.00\" height=\"4.00\" fill=\"" << s.color
            << "\"/>\n";
      }
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"" << px(s.width) << "\" points=\"";
      bool first = true;
      for (const auto& [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        if (!first) out << ' ';
        out << px(X(x)) << ',' << px(Y(y));
        first = false;
      }
      out << "\"/>\n";
    }
  }

  // Legend in the top right corner of the plot area.
  double ly = top + 16.0;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    const double lx = right - 150.0;
    out << "<line x1=\"" << px(lx) << "\" y1=\"" << px(ly - 4.0) << "\" x2=\""
        << px(lx + 24.0) << "\" y2=\"" << px(ly - 4.0) << "\" stroke=\""
        << s.color << "\" stroke-width=\"" << px(s.width) << "\"/>\n";
    out << "<text x=\"" << px(lx + 30.0) << "\" y=\"" << px(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape_text(s.label) << "</text>\n";
    ly += 16.0;
  }

  if (!spec.title.empty())
    out << "<text x=\"" << px(0.5 * W) << "\" y=\"24.00\" "
           "font-family=\"sans-serif\" font-size=\"15\" "
           "text-anchor=\"middle\">"
        << escape_text(spec.title) << "</text>\n";
  if (!spec.x_label.empty())
    out << "<text x=\"" << px(0.5 * (left + right)) << "\" y=\""
        << px(H - 12.0)
        << "\" font-family=\"sans-serif\" font-size=\"12\" "
           "text-anchor=\"middle\">"
        << escape_text(spec.x_label) << "</text>\n";
  if (!spec.y_label.empty())
    out << "<text x=\"18.00\" y=\"" << px(0.5 * (top + bottom))
        << "\" font-family=\"sans-serif\" font-size=\"12\" "
           "text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << px(0.5 * (top + bottom)) << ")\">" << escape_text(spec.y_label)
        << "</text>\n";

  out << "</svg>\n";
  return out.str();
}

void write_chart(const std::string& path, const ChartSpec& spec,
                 const std::vector<Series>& series) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << render_chart(spec, series);
}

}  // namespace sdstab
