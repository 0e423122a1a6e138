#include "tsd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tsd/errors.hpp"

namespace tsd {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_line_panels(const std::vector<SvgPanel>& panels, int width, int panel_height) {
  if (panels.empty()) throw UsageError("render_line_panels: no panels");
  const int margin_left = 60, margin_right = 16, margin_top = 24, margin_bottom = 12;
  const int plot_w = width - margin_left - margin_right;
  const int total_h = int(panels.size()) * panel_height;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(total_h) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(total_h) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(total_h) + "\" fill=\"white\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const SvgPanel& panel = panels[pi];
    const int top = int(pi) * panel_height + margin_top;
    const int plot_h = panel_height - margin_top - margin_bottom;

    double lo = HUGE_VAL, hi = -HUGE_VAL;
    std::size_t n = 0;
    for (const SvgSeries& s : panel.series) {
      n = std::max(n, s.values.size());
      for (double v : s.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (n == 0 || !std::isfinite(lo)) {
      lo = -1;
      hi = 1;
    }
    if (hi - lo < 1e-12) {
      hi += 0.5;
      lo -= 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto sx = [&](std::size_t i, std::size_t len) {
      const double t = len > 1 ? double(i) / double(len - 1) : 0.0;
      return margin_left + t * plot_w;
    };
    auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

    svg += "<g id=\"panel-" + panel.id + "\">\n";
    svg += "<text x=\"" + std::to_string(margin_left) + "\" y=\"" + std::to_string(top - 8) +
           "\" font-family=\"sans-serif\" font-size=\"13\">" + panel.title + "</text>\n";
    svg += "<rect x=\"" + std::to_string(margin_left) + "\" y=\"" + std::to_string(top) +
           "\" width=\"" + std::to_string(plot_w) + "\" height=\"" + std::to_string(plot_h) +
           "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
    // zero line when visible
    if (lo < 0.0 && hi > 0.0)
      svg += "<line x1=\"" + std::to_string(margin_left) + "\" y1=\"" + fmt(sy(0.0)) + "\" x2=\"" +
             std::to_string(margin_left + plot_w) + "\" y2=\"" + fmt(sy(0.0)) +
             "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"8\" y=\"" + std::to_string(top + 12) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(hi) + "</text>\n";
    svg += "<text x=\"8\" y=\"" + std::to_string(top + plot_h) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(lo) + "</text>\n";

    for (const SvgSeries& s : panel.series) {
      svg += "<polyline fill=\"none\" stroke=\"" + s.color +
             "\" stroke-width=\"1\" data-label=\"" + s.label + "\" points=\"";
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (i) svg += ' ';
        svg += fmt(sx(i, s.values.size())) + "," + fmt(sy(s.values[i]));
      }
      svg += "\"/>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_svg: cannot open '" + path + "'");
  os << svg;
  if (!os) throw DataError("write_svg: write to '" + path + "' failed");
}

}  // namespace tsd
