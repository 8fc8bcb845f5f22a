#pragma once

#include "patchgen/core/point_cloud.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace patchgen::cli {

struct PlotOptions {
  int size = 640;
  double azimuth_deg = 30.0;
  double elevation_deg = 20.0;
  double point_radius = 2.0;
  std::string title;
};

/// Fill color for a patch id; fixed palette, then golden-ratio hues.
std::string patch_color(std::uint16_t id);

/// Static orthographic scatter (SVG), far points drawn first, one color per
/// patch id and a legend entry per distinct id. `ids` may be empty.
std::string render_svg(const PointCloud& cloud, const std::vector<std::uint16_t>& ids, const PlotOptions& opts = {});

}  // namespace patchgen::cli
