#pragma once

#include <array>
#include <string>
#include <vector>

namespace qkd {

/// Grouped bars: one group per category, one bar per series.
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<std::string> series;
  /// values[series][category]
  std::vector<std::vector<double>> values;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> series;
  std::vector<std::vector<std::array<double, 2>>> points;
};

struct ScatterChart {
  std::string title;
  std::vector<std::array<double, 2>> points;
  /// Colour group of each point.
  std::vector<int> groups;
};

std::string render_svg(const BarChart& chart);
std::string render_svg(const LineChart& chart);
std::string render_svg(const ScatterChart& chart);

}  // namespace qkd
