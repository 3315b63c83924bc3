#include "qkd/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace qkd {
namespace {

constexpr double kWidth = 720, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 8> kPalette{"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                               "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* colour(std::size_t i) { return kPalette[i % kPalette.size()]; }

struct Axis {
  double lo, hi;
  double map(double v, double pixel_lo, double pixel_hi) const {
    return pixel_lo + (v - lo) / (hi - lo) * (pixel_hi - pixel_lo);
  }
};

Axis nice_axis(double lo, double hi, bool include_zero) {
  if (include_zero) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo < 0.0 || !include_zero ? lo - pad : lo, hi + pad};
}

std::string header(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.1f}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
      kWidth, kHeight, kWidth / 2, escape(title));
}

std::string y_axis(const Axis& axis, const std::string& label) {
  std::string out;
  const double y0 = kHeight - kBottom, y1 = kTop;
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                     kLeft, y0, y1);
  for (int k = 0; k <= 5; ++k) {
    const double v = axis.lo + (axis.hi - axis.lo) * k / 5.0;
    const double y = axis.map(v, y0, y1);
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{3:.1f}\" y=\"{4:.1f}\" text-anchor=\"end\">{5:.3g}</text>\n",
        kLeft, y, kWidth - kRight, kLeft - 6, y + 4, v);
  }
  out += fmt::format(
      "<text transform=\"translate(16,{:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
      (y0 + y1) / 2, escape(label));
  return out;
}

std::string legend(const std::vector<std::string>& series) {
  std::string out;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(s);
    out += fmt::format(
        "<rect x=\"{0:.1f}\" y=\"{1:.1f}\" width=\"12\" height=\"12\" fill=\"{2}\"/>\n"
        "<text x=\"{3:.1f}\" y=\"{4:.1f}\">{5}</text>\n",
        kWidth - kRight + 14, y, colour(s), kWidth - kRight + 32, y + 10, escape(series[s]));
  }
  return out;
}

}  // namespace

std::string render_svg(const BarChart& chart) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : chart.values) {
    for (double v : row) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  const Axis axis = nice_axis(lo, hi, true);
  std::string out = header(chart.title) + y_axis(axis, chart.y_label);
  const double y0 = kHeight - kBottom, y1 = kTop;
  const double plot_w = kWidth - kLeft - kRight;
  const std::size_t groups = std::max<std::size_t>(chart.categories.size(), 1);
  const double group_w = plot_w / static_cast<double>(groups);
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(chart.series.size(), 1));
  const double zero = axis.map(0.0, y0, y1);
  for (std::size_t c = 0; c < chart.categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c);
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
      const double v = chart.values[s][c];
      if (!std::isfinite(v)) continue;
      const double y = axis.map(v, y0, y1);
      out += fmt::format(
          "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\">"
          "<title>{}: {:.4f}</title></rect>\n",
          gx + 0.1 * group_w + bar_w * static_cast<double>(s), std::min(y, zero), bar_w,
          std::abs(zero - y), colour(s), escape(chart.series[s]), v);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                       gx + group_w / 2, y0 + 18, escape(chart.categories[c]));
  }
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                     kLeft, zero, kWidth - kRight);
  return out + legend(chart.series) + "</svg>\n";
}

std::string render_svg(const LineChart& chart) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& line : chart.points) {
    for (const auto& p : line) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      xlo = std::min(xlo, p[0]);
      xhi = std::max(xhi, p[0]);
      ylo = std::min(ylo, p[1]);
      yhi = std::max(yhi, p[1]);
    }
  }
  if (!std::isfinite(xlo)) xlo = xhi = ylo = yhi = 0.0;
  const Axis xa = nice_axis(xlo, xhi, false), ya = nice_axis(ylo, yhi, false);
  std::string out = header(chart.title) + y_axis(ya, chart.y_label);
  const double y0 = kHeight - kBottom, y1 = kTop, x0 = kLeft, x1 = kWidth - kRight;
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                     x0, y0, x1);
  for (int k = 0; k <= 5; ++k) {
    const double v = xa.lo + (xa.hi - xa.lo) * k / 5.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n",
                       xa.map(v, x0, x1), y0 + 18, v);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                     (x0 + x1) / 2, kHeight - 16, escape(chart.x_label));
  for (std::size_t s = 0; s < chart.points.size(); ++s) {
    std::string pts;
    for (const auto& p : chart.points[s]) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      pts += fmt::format("{:.1f},{:.1f} ", xa.map(p[0], x0, x1), ya.map(p[1], y0, y1));
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       colour(s), pts);
  }
  return out + legend(chart.series) + "</svg>\n";
}

std::string render_svg(const ScatterChart& chart) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& p : chart.points) {
    xlo = std::min(xlo, p[0]);
    xhi = std::max(xhi, p[0]);
    ylo = std::min(ylo, p[1]);
    yhi = std::max(yhi, p[1]);
  }
  if (chart.points.empty()) xlo = xhi = ylo = yhi = 0.0;
  const Axis xa = nice_axis(xlo, xhi, false), ya = nice_axis(ylo, yhi, false);
  std::string out = header(chart.title) + y_axis(ya, "component 2");
  const double y0 = kHeight - kBottom, y1 = kTop, x0 = kLeft, x1 = kWidth - kRight;
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">component 1</text>\n",
                     (x0 + x1) / 2, kHeight - 16);
  for (std::size_t i = 0; i < chart.points.size(); ++i) {
    const int g = i < chart.groups.size() ? chart.groups[i] : 0;
    out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3.5\" fill=\"{}\"/>\n",
                       xa.map(chart.points[i][0], x0, x1), ya.map(chart.points[i][1], y0, y1),
                       colour(static_cast<std::size_t>(std::max(g, 0))));
  }
  return out + "</svg>\n";
}

}  // namespace qkd
