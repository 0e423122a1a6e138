#pragma once

#include <string>
#include <vector>

namespace tsd {

struct SvgSeries {
  std::string label;
  std::string color = "black";
  std::vector<double> values;
};

// One chart row: id becomes <g id="panel-<id>">.
struct SvgPanel {
  std::string id;
  std::string title;
  std::vector<SvgSeries> series;
};

// Self-contained multi-panel line chart. One polyline per series with one
// point per value.
std::string render_line_panels(const std::vector<SvgPanel>& panels, int width = 960,
                               int panel_height = 150);

void write_svg(const std::string& path, const std::string& svg);

}  // namespace tsd
