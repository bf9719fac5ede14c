#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "fusenet/dataio.hpp"

namespace fusenet::cli {

/// Fixed five-stop diverging map, near depths red and far depths blue.
/// Depth d maps to t = clamp((d - near) / (far - near), 0, 1) and is linearly
/// interpolated between stops at t = 0, 0.25, 0.5, 0.75, 1. Unobserved or
/// non-positive depth is black.
inline std::array<std::uint8_t, 3> depth_color(double d, double near, double far) {
  static constexpr std::array<std::array<double, 3>, 5> kStops = {{
      {215, 48, 39},
      {252, 141, 89},
      {254, 224, 144},
      {145, 191, 219},
      {69, 117, 180},
  }};
  if (!(d > 0)) return {0, 0, 0};
  const double t = std::clamp((d - near) / (far - near), 0.0, 1.0) * 4.0;
  const int i = std::min(static_cast<int>(t), 3);
  const double f = t - i;
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    rgb[c] = static_cast<std::uint8_t>(std::lround(kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c])));
  }
  return rgb;
}

inline dataio::RgbImage colorize(const geometry::DepthImage& depth, double near, double far) {
  dataio::RgbImage out(depth.height, depth.width);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const auto c = depth.observed(u, v) ? depth_color(depth.at(u, v), near, far) : std::array<std::uint8_t, 3>{};
      std::copy(c.begin(), c.end(), out.at(u, v));
    }
  }
  return out;
}

}  // namespace fusenet::cli
