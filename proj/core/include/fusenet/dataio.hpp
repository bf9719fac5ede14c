#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusenet/geometry.hpp"
#include "fusenet/rng.hpp"

namespace fusenet::dataio {

using geometry::DepthImage;
using geometry::Intrinsics;

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}
  std::uint8_t* at(int u, int v) { return &pixels[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* at(int u, int v) const { return &pixels[(static_cast<std::size_t>(v) * width + u) * 3]; }
};

/// Depth PNG: 16-bit single channel, meters = stored / 256, stored 0 = no data.
DepthImage load_depth_png(const std::filesystem::path& path);
void save_depth_png(const DepthImage& depth, const std::filesystem::path& path);
/// Quantizes one depth value the way save_depth_png does.
std::uint16_t encode_depth(float meters);

RgbImage load_rgb_png(const std::filesystem::path& path);
void save_rgb_png(const RgbImage& image, const std::filesystem::path& path);

struct Frame {
  RgbImage rgb;
  DepthImage sparse;
  std::optional<DepthImage> gt;
  Intrinsics intrinsics;
  std::string id;

  int height() const { return sparse.height; }
  int width() const { return sparse.width; }
  void validate() const;
};

/// Window [x0, x0+w) x [y0, y0+h) of every image; principal point shifted by (-x0, -y0).
Frame crop(const Frame& frame, int x0, int y0, int h, int w);
/// Crop with a uniformly drawn offset.
Frame random_crop(const Frame& frame, int h, int w, Rng& rng);

/// Uniform sample without replacement of observed pixels, returned as
/// ascending linear indices. Every observed pixel when there are at most `budget`.
std::vector<std::uint32_t> sample_points(const DepthImage& depth, std::size_t budget, Rng& rng);

struct SyntheticSceneConfig {
  int height = 64;
  int width = 192;
  int plane_count = 2;  // 1: ground only, 2: ground plus a back wall at depth_max
  int box_count = 3;
  double depth_min = 2.0;
  double depth_max = 40.0;
  double camera_height = 1.6;
  int lidar_line_count = 16;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  Intrinsics intrinsics() const;
};

/// Axis-aligned boxes standing on a ground plane, seen by a pinhole camera.
/// Depth uses arithmetic only, so a seed yields the same frame everywhere.
Frame synth_generate(const SyntheticSceneConfig& cfg);

/// Frames whose file stems appear in rgb/ and sparse/ (gt/ optional) under
/// `root`. Intrinsics come from intrinsics/<stem>.txt, else root/intrinsics.txt.
std::vector<Frame> load_dataset(const std::filesystem::path& root, bool require_gt);

}  // namespace fusenet::dataio
