#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusenet/autograd.hpp"

namespace fusenet::geometry {

using Point3 = std::array<double, 3>;

/// Pinhole camera. Pixel (u, v) is the column/row index; the ray through a
/// pixel index hits the image plane at exactly that index.
struct Intrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  void validate() const;
  /// Principal point moved by (-dx, -dy), extents replaced.
  Intrinsics cropped(int dx, int dy, int new_width, int new_height) const;

  /// One whitespace-separated record: fx fy cx cy width height.
  static Intrinsics load(const std::filesystem::path& path);
  static Intrinsics parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

/// Camera-frame points (x right, y down, z forward), meters.
struct PointSet {
  std::vector<Point3> coords;

  std::size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }
  void validate() const;
};

/// H x W metric depth with an observation mask. Unobserved entries hold 0.
struct DepthImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> mask;

  DepthImage() = default;
  DepthImage(int h, int w);
  /// Mask derived from values > 0.
  static DepthImage from_values(int h, int w, std::vector<float> values);

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
  bool observed(int u, int v) const { return mask[index(u, v)] != 0; }
  float at(int u, int v) const { return values[index(u, v)]; }
  void set(int u, int v, float depth);
  void clear(int u, int v);
  std::size_t observed_count() const;
  void validate() const;
};

/// Points for every observed pixel, in row-major pixel order.
PointSet unproject(const DepthImage& depth, const Intrinsics& K);

/// Points for the listed linear pixel indices (each must be observed), in list order.
PointSet unproject_pixels(const DepthImage& depth, const Intrinsics& K,
                          std::span<const std::uint32_t> pixel_indices);

/// Integer pixel locations of points on a (possibly downscaled) feature grid.
/// `batch` tags each point with the batch element whose map it indexes.
struct PixelMap {
  std::vector<int> u;
  std::vector<int> v;
  std::vector<std::uint8_t> in_bounds;
  std::vector<int> batch;
  int height = 0;  // feature grid extents
  int width = 0;

  std::size_t size() const { return u.size(); }
  std::size_t in_bounds_count() const;
  /// Stacks per-frame maps; frame i's points get batch index i. Extents must agree.
  static PixelMap concat(std::span<const PixelMap> parts);
};

/// Projects onto the grid obtained by scaling the image by `scale`. The
/// full-resolution pixel is round(f*x/z + c); the grid cell is
/// floor(scale * (pixel + 0.5)). Out-of-grid points are flagged, not dropped.
PixelMap project(const PointSet& points, const Intrinsics& K, double scale);

/// Nearest-pixel lookup of per-point features from a [B, C, H, W] (or [C, H, W])
/// map. Out-of-bounds points read zeros. Backward scatter-adds into the map.
template <typename T>
nd::Var<T> gather(const nd::Var<T>& feat, const PixelMap& pixels);

/// Writes [N, C] point features into an all-zero [B, C, H, W] map; pixels hit
/// by several points hold the mean of their rows.
template <typename T>
nd::Var<T> scatter(const nd::Var<T>& point_feats, const PixelMap& pixels, std::size_t batch);

}  // namespace fusenet::geometry
