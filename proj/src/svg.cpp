#include "anm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace anm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
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
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  void include(double v) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void pad() {
    if (lo > hi) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

}  // namespace

std::string SvgPlot::render() const {
  const double ml = 70, mr = 20, mt = 40, mb = 50;  // margins
  const double pw = width - ml - mr, ph = height - mt - mb;

  Range rx, ry;
  for (const SvgSeries& s : series) {
    for (double v : s.x) rx.include(v);
    for (double v : s.y) ry.include(v);
  }
  rx.pad();
  ry.pad();
  const auto px = [&](double v) { return ml + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  const auto py = [&](double v) { return mt + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  o << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"15\">" << escape(title) << "</text>\n";

  // axes + ticks
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = rx.lo + (rx.hi - rx.lo) * i / 5.0;
    const double fy = ry.lo + (ry.hi - ry.lo) * i / 5.0;
    o << "<line x1=\"" << fmt(px(fx)) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt(px(fx))
      << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << mt + ph + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fx)
      << "</text>\n";
    o << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt(py(fy)) << "\" x2=\"" << ml
      << "\" y2=\"" << fmt(py(fy)) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << ml - 8 << "\" y=\"" << fmt(py(fy) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
      << "</text>\n";
  }
  o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << mt + ph / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << escape(y_label)
    << "</text>\n";

  int legend_y = static_cast<int>(mt) + 14;
  for (const SvgSeries& s : series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.lines && n >= 2) {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i)
        o << fmt(px(s.x[i])) << "," << fmt(py(s.y[i])) << (i + 1 < n ? " " : "");
      o << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < n; ++i)
        o << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
          << "\" r=\"3\" fill=\"" << s.color << "\" fill-opacity=\"0.8\"/>\n";
    }
    if (!s.label.empty()) {
      o << "<rect x=\"" << ml + pw - 130 << "\" y=\"" << legend_y - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
      o << "<text x=\"" << ml + pw - 116 << "\" y=\"" << legend_y
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label) << "</text>\n";
      legend_y += 16;
    }
  }
  o << "</svg>\n";
  return o.str();
}

SvgPlot histogram_plot(const std::vector<double>& values, int bins,
                       const std::string& title, const std::string& x_label,
                       bool trim_outliers) {
  SvgPlot plot;
  plot.title = title;
  plot.x_label = x_label;
  plot.y_label = "count";

  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  std::sort(v.begin(), v.end());
  if (trim_outliers && v.size() >= 20) {
    const std::size_t cut = v.size() / 100;
    v.assign(v.begin() + cut, v.end() - cut);
  }
  if (v.empty() || bins < 1) return plot;

  const double lo = v.front(), hi = std::max(v.back(), v.front() + 1e-12);
  std::vector<int> counts(bins, 0);
  for (double x : v) {
    int b = static_cast<int>((x - lo) / (hi - lo) * bins);
    counts[std::clamp(b, 0, bins - 1)]++;
  }
  // render each bar as a short line series forming a step outline
  SvgSeries s;
  s.lines = true;
  s.color = "#ff7f0e";
  for (int b = 0; b < bins; ++b) {
    const double x0 = lo + (hi - lo) * b / bins, x1 = lo + (hi - lo) * (b + 1) / bins;
    s.x.push_back(x0);
    s.y.push_back(counts[b]);
    s.x.push_back(x1);
    s.y.push_back(counts[b]);
  }
  plot.series.push_back(std::move(s));
  return plot;
}

}  // namespace anm
