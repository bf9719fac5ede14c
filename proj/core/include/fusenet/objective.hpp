#pragma once

#include <span>
#include <string>
#include <vector>

#include "fusenet/autograd.hpp"
#include "fusenet/geometry.hpp"

namespace fusenet::objective {

using geometry::DepthImage;

enum class LossKind { L2, SmoothL1, Combined };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::L2;
  double gamma = 1.0;  // weight of the smooth-L1 term in Combined

  void validate() const;
};

/// 0.5 e^2 for |e| < 1, |e| - 0.5 otherwise, with e = d - l.
double smooth_l1(double d, double l);

/// Masked loss over [B, 1, H, W] predictions, averaged over labeled pixels of
/// the whole batch. L2 is the mean squared error; Combined adds gamma times the
/// mean smooth-L1. Unlabeled pixels get exactly zero gradient.
template <typename T>
nd::Var<T> masked_loss(const nd::Var<T>& pred, std::span<const DepthImage> gt, const LossConfig& cfg);

/// Same, with the target as a dense tensor and a 0/1 mask of the same shape.
template <typename T>
nd::Var<T> masked_loss(const nd::Var<T>& pred, const nd::Tensor<T>& target, const std::vector<std::uint8_t>& mask,
                       const LossConfig& cfg);

/// Benchmark metrics in the units the depth-completion leaderboard reports.
struct MetricReport {
  double rmse_mm = 0;
  double mae_mm = 0;
  double irmse = 0;  // 1/km
  double imae = 0;   // 1/km
  std::size_t pixel_count = 0;
  /// Predictions raised to the inverse-depth floor before inversion.
  std::size_t floored_count = 0;

  static constexpr double kInverseFloorMeters = 1e-3;

  /// One key per line, fixed-point with two decimals, units in the keys.
  std::string to_text() const;
  static std::string table_header();
  std::string table_row(const std::string& label) const;
};

/// Pools squared and absolute errors over any number of frames.
class MetricAccumulator {
 public:
  /// `pred` is H*W meters in row-major order matching `gt`.
  void add(std::span<const float> pred, const DepthImage& gt);
  void add(std::span<const double> pred, const DepthImage& gt);
  MetricReport report() const;
  std::size_t pixel_count() const { return count_; }

 private:
  template <typename T>
  void add_impl(std::span<const T> pred, const DepthImage& gt);

  double sq_ = 0, abs_ = 0, isq_ = 0, iabs_ = 0;
  std::size_t count_ = 0, floored_ = 0;
};

MetricReport metrics(std::span<const float> pred, const DepthImage& gt);

}  // namespace fusenet::objective
