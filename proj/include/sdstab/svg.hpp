#pragma once

// Minimal, dependency-free chart emission. Only the SVG 1.1 elements rect,
// line, polyline and text are produced, and every number is printed through
// a fixed format (two decimals for geometry, %.4g for tick labels), so the
// same inputs always yield byte-identical files.

#include <string>
#include <utility>
#include <vector>

namespace sdstab {

/// One plotted series. With `stems` the points are drawn as vertical lines
/// dropped to y = 0 with square markers (sampled trajectories); otherwise
/// the points are joined by a polyline (continuous curves).
struct Series {
  std::string label;
  std::string color = "#000000";
  double width = 1.5;
  bool stems = false;
  std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 800;
  int height = 500;
};

/// Renders the chart as an SVG document string. Axis ranges are the data
/// extents padded by 5% (degenerate ranges are widened by 1), with six
/// evenly spaced labeled ticks per axis and a legend inside the top right
/// corner. Throws ConfigError when no series contains a finite point.
std::string render_chart(const ChartSpec& spec,
                         const std::vector<Series>& series);

/// render_chart written to a file; throws ConfigError when the file cannot
/// be opened.
void write_chart(const std::string& path, const ChartSpec& spec,
                 const std::vector<Series>& series);

}  // namespace sdstab
