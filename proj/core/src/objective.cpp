#include "fusenet/objective.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fusenet/errors.hpp"

namespace fusenet::objective {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "l2") return LossKind::L2;
  if (name == "smooth_l1") return LossKind::SmoothL1;
  if (name == "combined") return LossKind::Combined;
  throw ConfigError("unknown loss '" + name + "' (expected l2, smooth_l1 or combined)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::L2:
      return "l2";
    case LossKind::SmoothL1:
      return "smooth_l1";
    case LossKind::Combined:
      return "combined";
  }
  return "?";
}

void LossConfig::validate() const {
  if (!(gamma >= 0)) throw ConfigError("loss gamma must be non-negative");
}

double smooth_l1(double d, double l) {
  const double e = std::abs(d - l);
  return e < 1.0 ? 0.5 * e * e : e - 0.5;
}

template <typename T>
nd::Var<T> masked_loss(const nd::Var<T>& pred, const nd::Tensor<T>& target, const std::vector<std::uint8_t>& mask,
                       const LossConfig& cfg) {
  cfg.validate();
  nd::require_same_shape(pred.shape(), target.shape(), "masked_loss");
  if (mask.size() != target.numel()) throw std::invalid_argument("masked_loss: mask size mismatch");
  std::size_t count = 0;
  for (auto m : mask) count += m != 0;
  if (count == 0) throw DataError("masked_loss: no labeled pixels");

  const double w_l2 = cfg.kind == LossKind::SmoothL1 ? 0.0 : 1.0;
  const double w_l1 = cfg.kind == LossKind::L2 ? 0.0 : (cfg.kind == LossKind::SmoothL1 ? 1.0 : cfg.gamma);
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0;
  const T* p = pred.value().data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double e = static_cast<double>(p[i]) - target[i];
    total += w_l2 * e * e + w_l1 * smooth_l1(p[i], target[i]);
  }
  nd::Tensor<T> out({1}, static_cast<T>(total * inv));
  return nd::Var<T>::make_result(std::move(out), {pred}, "masked_loss",
                                 [target, mask, w_l2, w_l1, inv](nd::Node<T>& node) {
                                   T* d = node.parents[0]->grad_buffer().data();
                                   const T* p = node.parents[0]->value.data();
                                   const double g = node.grad[0] * inv;
                                   for (std::size_t i = 0; i < mask.size(); ++i) {
                                     if (!mask[i]) continue;
                                     const double e = static_cast<double>(p[i]) - target[i];
                                     const double slope_l1 = std::abs(e) < 1.0 ? e : (e > 0 ? 1.0 : -1.0);
                                     d[i] += static_cast<T>(g * (w_l2 * 2.0 * e + w_l1 * slope_l1));
                                   }
                                 });
}

template <typename T>
nd::Var<T> masked_loss(const nd::Var<T>& pred, std::span<const DepthImage> gt, const LossConfig& cfg) {
  const nd::Shape& s = pred.shape();
  if (s.size() != 4 || s[1] != 1 || s[0] != gt.size()) {
    throw std::invalid_argument("masked_loss: predictions " + nd::shape_str(s) + " do not match " +
                                std::to_string(gt.size()) + " ground-truth images");
  }
  nd::Tensor<T> target(s);
  std::vector<std::uint8_t> mask(target.numel(), 0);
  const std::size_t plane = s[2] * s[3];
  for (std::size_t b = 0; b < gt.size(); ++b) {
    if (static_cast<std::size_t>(gt[b].height) != s[2] || static_cast<std::size_t>(gt[b].width) != s[3]) {
      throw std::invalid_argument("masked_loss: ground-truth extents differ from predictions");
    }
    for (std::size_t i = 0; i < plane; ++i) {
      target[b * plane + i] = static_cast<T>(gt[b].values[i]);
      mask[b * plane + i] = gt[b].mask[i];
    }
  }
  return masked_loss(pred, target, mask, cfg);
}

template <typename T>
void MetricAccumulator::add_impl(std::span<const T> pred, const DepthImage& gt) {
  if (pred.size() != gt.values.size()) throw std::invalid_argument("metrics: prediction size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!gt.mask[i]) continue;
    const double l = gt.values[i];
    double d = pred[i];
    const double e = d - l;
    sq_ += e * e;
    abs_ += std::abs(e);
    if (d < MetricReport::kInverseFloorMeters) {
      d = MetricReport::kInverseFloorMeters;
      ++floored_;
    }
    // 1000/d converts 1/m to 1/km.
    const double ie = 1000.0 / d - 1000.0 / l;
    isq_ += ie * ie;
    iabs_ += std::abs(ie);
    ++count_;
  }
}

void MetricAccumulator::add(std::span<const float> pred, const DepthImage& gt) { add_impl(pred, gt); }
void MetricAccumulator::add(std::span<const double> pred, const DepthImage& gt) { add_impl(pred, gt); }

MetricReport MetricAccumulator::report() const {
  if (count_ == 0) throw DataError("metrics: ground truth has no labeled pixels");
  const double n = static_cast<double>(count_);
  MetricReport r;
  r.rmse_mm = 1000.0 * std::sqrt(sq_ / n);
  r.mae_mm = 1000.0 * abs_ / n;
  r.irmse = std::sqrt(isq_ / n);
  r.imae = iabs_ / n;
  r.pixel_count = count_;
  r.floored_count = floored_;
  return r;
}

MetricReport metrics(std::span<const float> pred, const DepthImage& gt) {
  MetricAccumulator acc;
  acc.add(pred, gt);
  return acc.report();
}

std::string MetricReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "rmse_mm=%.2f\nmae_mm=%.2f\nirmse_per_km=%.2f\nimae_per_km=%.2f\npixel_count=%zu\n"
                "inverse_floor_m=%.3f\ninverse_floor_hits=%zu\n",
                rmse_mm, mae_mm, irmse, imae, pixel_count, kInverseFloorMeters, floored_count);
  return buf;
}

std::string MetricReport::table_header() {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %12s %12s %14s %14s", "Frame", "RMSE (mm)", "MAE (mm)", "iRMSE (1/km)",
                "iMAE (1/km)");
  return buf;
}

std::string MetricReport::table_row(const std::string& label) const {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-24s %12.2f %12.2f %14.2f %14.2f", label.c_str(), rmse_mm, mae_mm, irmse, imae);
  return buf;
}

template nd::Var<float> masked_loss(const nd::Var<float>&, std::span<const DepthImage>, const LossConfig&);
template nd::Var<double> masked_loss(const nd::Var<double>&, std::span<const DepthImage>, const LossConfig&);
template nd::Var<float> masked_loss(const nd::Var<float>&, const nd::Tensor<float>&, const std::vector<std::uint8_t>&,
                                    const LossConfig&);
template nd::Var<double> masked_loss(const nd::Var<double>&, const nd::Tensor<double>&,
                                     const std::vector<std::uint8_t>&, const LossConfig&);

}  // namespace fusenet::objective
