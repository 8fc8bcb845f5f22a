#include "patchgen/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

namespace patchgen::cli {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
                                    "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7",
                                    "#dbdb8d", "#9edae5"};

std::string hsv_hex(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string patch_color(std::uint16_t id) {
  constexpr std::size_t n = std::size(kPalette);
  if (id < n) return kPalette[id];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  return hsv_hex(std::fmod(static_cast<double>(id - n) * phi, 1.0), 0.65, 0.85);
}

std::string render_svg(const PointCloud& cloud, const std::vector<std::uint16_t>& ids, const PlotOptions& opts) {
  if (!ids.empty() && ids.size() != cloud.size()) {
    throw DataError("patch-id count " + std::to_string(ids.size()) + " does not match cloud size " +
                    std::to_string(cloud.size()));
  }
  const double az = opts.azimuth_deg * std::numbers::pi / 180.0;
  const double el = opts.elevation_deg * std::numbers::pi / 180.0;
  const auto& p = cloud.points();
  const auto n = static_cast<std::size_t>(p.rows());
  std::vector<double> u(n), v(n), depth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    // Turn about y by the azimuth, then tilt about x by the elevation.
    const double x1 = std::cos(az) * p(r, 0) + std::sin(az) * p(r, 2);
    const double z1 = -std::sin(az) * p(r, 0) + std::cos(az) * p(r, 2);
    const double y2 = std::cos(el) * p(r, 1) - std::sin(el) * z1;
    const double z2 = std::sin(el) * p(r, 1) + std::cos(el) * z1;
    u[i] = x1;
    v[i] = y2;
    depth[i] = z2;
  }
  double extent = 1e-12;
  for (std::size_t i = 0; i < n; ++i) extent = std::max({extent, std::fabs(u[i]), std::fabs(v[i])});
  const double legend_w = ids.empty() ? 0.0 : 110.0;
  const double s = opts.size;
  const double half = 0.5 * s, scale = 0.45 * s / extent;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                static_cast<int>(s + legend_w), opts.size, static_cast<int>(s + legend_w), opts.size);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!opts.title.empty()) {
    out += "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + escape(opts.title) + "</text>\n";
  }
  for (std::size_t i : order) {
    const std::string color = ids.empty() ? std::string("#1f77b4") : patch_color(ids[i]);
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"%s\"/>\n",
                  half + scale * u[i], half - scale * v[i], opts.point_radius, color.c_str());
    out += buf;
  }
  if (!ids.empty()) {
    const std::set<std::uint16_t> distinct(ids.begin(), ids.end());
    int row = 0;
    for (auto id : distinct) {
      const double y = 30.0 + 18.0 * row++;
      std::snprintf(buf, sizeof(buf),
                    "<g class=\"legend\"><rect x=\"%.0f\" y=\"%.0f\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                    "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\">patch %u</text></g>\n",
                    s + 10.0, y, patch_color(id).c_str(), s + 28.0, y + 10.0, static_cast<unsigned>(id));
      out += buf;
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace patchgen::cli
