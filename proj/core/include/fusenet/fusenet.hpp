#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fusenet/contconv.hpp"
#include "fusenet/dataio.hpp"
#include "fusenet/geometry.hpp"
#include "fusenet/layers.hpp"
#include "fusenet/neighbors.hpp"

namespace fusenet::model {

/// Which of the three block branches are built.
struct BranchSet {
  bool stride1 = true;
  bool stride2 = true;
  bool continuous = true;

  static BranchSet all() { return {}; }
  /// Comma-separated subset of {s1, s2, cont}.
  static BranchSet parse(const std::string& text);
  std::string str() const;
  bool any() const { return stride1 || stride2 || continuous; }
  bool operator==(const BranchSet&) const = default;
};

struct FuseNetConfig {
  std::size_t channels = 16;  // C
  std::size_t blocks = 3;     // N
  std::size_t neighbors = 9;  // K
  std::size_t sample_points = 10000;
  double gamma = 1.0;
  BranchSet branches;

  void validate() const;
};

/// Per-batch point data shared by every block: one neighbor table over the
/// stacked point sets and their cells on the half-resolution grid.
struct PointGeometry {
  neighbors::NeighborTable table;
  geometry::PixelMap pixels;
  std::size_t batch = 0;

  bool empty() const { return table.rows == 0; }
};

/// Samples, unprojects, builds KNN tables, and projects to the grid at `scale`
/// (the blocks run at half the input resolution).
PointGeometry build_point_geometry(std::span<const geometry::DepthImage> sparse,
                                   std::span<const geometry::Intrinsics> intrinsics, std::size_t neighbors,
                                   std::size_t sample_budget, Rng& rng, double scale = 0.5);

/// 2D-3D fuse block. Output = fuse(sum of present branches) + shortcut, where
/// the shortcut exists only when input and output widths agree.
template <typename T>
class FuseBlock {
 public:
  FuseBlock(std::size_t in_channels, std::size_t channels, BranchSet branches, Rng& rng);

  nd::Var<T> forward(const nd::Var<T>& x, const PointGeometry& geom);
  /// gather -> two continuous convolutions -> scatter.
  nd::Var<T> point_branch(const nd::Var<T>& x, const PointGeometry& geom);

  void collect(const std::string& prefix, nd::ParamSet<T>& out);

  bool has_shortcut() const { return in_channels_ == channels_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t channels() const { return channels_; }
  const BranchSet& branches() const { return branches_; }

  std::unique_ptr<nd::ConvBnRelu<T>> stride1;
  std::unique_ptr<nd::ConvBnRelu<T>> stride2_down;
  std::unique_ptr<nd::ConvBnRelu<T>> stride2_conv;
  std::unique_ptr<contconv::ContConvLayer<T>> cont1;
  std::unique_ptr<contconv::ContConvLayer<T>> cont2;
  std::unique_ptr<nd::ConvBnRelu<T>> fuse;

 private:
  std::size_t in_channels_;
  std::size_t channels_;
  BranchSet branches_;
};

/// Stems -> N fuse blocks -> 2x upsample -> two output convolutions.
template <typename T>
class FuseNet {
 public:
  static constexpr std::size_t kDepthStemWidth = 16;
  static constexpr std::size_t kRgbdStemWidth = 32;

  FuseNet(const FuseNetConfig& cfg, std::uint64_t seed);
  FuseNet(const FuseNet&) = delete;
  FuseNet& operator=(const FuseNet&) = delete;

  /// rgb: [B, 3, H, W] in [0, 1]; depth: [B, 1, H, W] meters (0 = unobserved).
  /// H and W must be multiples of 4. Returns [B, 1, H, W] meters.
  nd::Var<T> forward(const nd::Var<T>& rgb, const nd::Var<T>& depth, const PointGeometry& geom);

  /// Builds the input tensors and point geometry from frames, then runs forward.
  nd::Var<T> predict(std::span<const dataio::Frame> frames, Rng& rng);

  /// Block-stack input: concatenated stem outputs, [B, 48, H/2, W/2].
  nd::Var<T> stems(const nd::Var<T>& rgb, const nd::Var<T>& depth);

  nd::ParamSet<T> params();
  void set_training(bool on);
  std::size_t param_count();
  bool needs_points() const { return cfg_.branches.continuous; }
  const FuseNetConfig& config() const { return cfg_; }
  FuseBlock<T>& block(std::size_t i) { return *blocks_.at(i); }

 private:
  FuseNetConfig cfg_;
  std::unique_ptr<nd::ConvBnRelu<T>> depth_stem1_, depth_stem2_, rgbd_stem1_, rgbd_stem2_;
  std::vector<std::unique_ptr<FuseBlock<T>>> blocks_;
  std::unique_ptr<nd::ConvBnRelu<T>> head_conv_;
  std::unique_ptr<nd::Conv2dLayer<T>> head_out_;
};

/// Learnable scalar count of the network described by `cfg`.
std::size_t param_count(const FuseNetConfig& cfg);

/// Network restricted to the listed block branches.
template <typename T>
std::unique_ptr<FuseNet<T>> ablate(FuseNetConfig cfg, BranchSet branches, std::uint64_t seed);

/// [B, 3, H, W] with bytes scaled to [0, 1].
template <typename T>
nd::Tensor<T> rgb_tensor(std::span<const dataio::Frame> frames);
/// [B, 1, H, W] sparse depth in meters.
template <typename T>
nd::Tensor<T> depth_tensor(std::span<const dataio::Frame> frames);

}  // namespace fusenet::model
