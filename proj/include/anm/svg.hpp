#pragma once

#include <string>
#include <vector>

namespace anm {

// Minimal deterministic SVG renderer for the benchmark figures: scatter
// plots (return vs solver time), histograms (solver-time distribution) and
// line traces (per-step series). No external plotting dependency so the
// output is stable enough for golden-file comparison.
struct SvgSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
  bool lines = false;  // scatter by default
};

struct SvgPlot {
  std::string title, x_label, y_label;
  int width = 640, height = 420;
  std::vector<SvgSeries> series;

  std::string render() const;
};

// Equal-width histogram of values; trims values beyond p1/p99 quantiles
// when trim_outliers is set (outliers are not shown).
SvgPlot histogram_plot(const std::vector<double>& values, int bins,
                       const std::string& title, const std::string& x_label,
                       bool trim_outliers = true);

}  // namespace anm
