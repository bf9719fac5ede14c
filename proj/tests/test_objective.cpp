#include <gtest/gtest.h>

#include <cmath>

#include "fusenet/errors.hpp"
#include "fusenet/objective.hpp"
#include "test_util.hpp"

using namespace fusenet;
using namespace fusenet::objective;
using fusenet::testing::random_tensor;
using V = nd::Var<double>;

namespace {

DepthImage gt_from(std::vector<float> v, int h, int w) { return DepthImage::from_values(h, w, std::move(v)); }

}  // namespace

TEST(SmoothL1, BranchValues) {
  EXPECT_EQ(smooth_l1(3.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(2.5, 2.0), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(3.5, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5, 2.0), 1.0);
}

TEST(SmoothL1, ContinuousWithContinuousSlopeAtOne) {
  const double h = 1e-7;
  EXPECT_NEAR(smooth_l1(1.0 - h, 0.0), 0.5, 1e-6);
  EXPECT_NEAR(smooth_l1(1.0 + h, 0.0), 0.5, 1e-6);
  const double left = (smooth_l1(1.0, 0.0) - smooth_l1(1.0 - h, 0.0)) / h;
  const double right = (smooth_l1(1.0 + h, 0.0) - smooth_l1(1.0, 0.0)) / h;
  EXPECT_NEAR(left, 1.0, 1e-6);
  EXPECT_NEAR(right, 1.0, 1e-6);
}

TEST(MaskedLoss, ZeroWhenPredictionMatches) {
  const auto gt = gt_from({2, 0, 4, 5}, 2, 2);
  auto pred = V::constant(nd::Tensor<double>::from({1, 1, 2, 2}, {2, 9, 4, 5}));
  for (auto kind : {LossKind::L2, LossKind::SmoothL1, LossKind::Combined}) {
    EXPECT_EQ(masked_loss<double>(pred, {&gt, 1}, {kind, 1.0}).value()[0], 0.0);
  }
}

TEST(MaskedLoss, SmoothL1HandAverage) {
  const auto gt = gt_from({2, 3, 0}, 1, 3);
  auto pred = V::constant(nd::Tensor<double>::from({1, 1, 1, 3}, {2.5, 1.5, 100}));
  EXPECT_DOUBLE_EQ(masked_loss<double>(pred, {&gt, 1}, {LossKind::SmoothL1, 1.0}).value()[0], 0.5625);
  EXPECT_DOUBLE_EQ(masked_loss<double>(pred, {&gt, 1}, {LossKind::L2, 1.0}).value()[0], (0.25 + 2.25) / 2);
  EXPECT_DOUBLE_EQ(masked_loss<double>(pred, {&gt, 1}, {LossKind::Combined, 2.0}).value()[0], 1.25 + 2 * 0.5625);
}

TEST(MaskedLoss, CombinedWithZeroGammaEqualsL2) {
  Rng rng(1);
  const auto t = random_tensor({2, 1, 3, 4}, rng, 1, 20);
  std::vector<DepthImage> gts;
  for (int b = 0; b < 2; ++b) {
    std::vector<float> v(12);
    for (int i = 0; i < 12; ++i) v[i] = (i % 3) ? static_cast<float>(uniform(rng, 1, 20)) : 0.0f;
    gts.push_back(gt_from(v, 3, 4));
  }
  auto pred = V::constant(t);
  EXPECT_EQ(masked_loss<double>(pred, gts, {LossKind::Combined, 0.0}).value()[0],
            masked_loss<double>(pred, gts, {LossKind::L2, 1.0}).value()[0]);
}

TEST(MaskedLoss, UnmaskedPixelsGetExactlyZeroGradient) {
  Rng rng(2);
  const auto gt = gt_from({0, 3, 0, 7, 2, 0}, 2, 3);
  for (auto kind : {LossKind::L2, LossKind::SmoothL1, LossKind::Combined}) {
    auto pred = V::parameter(random_tensor({1, 1, 2, 3}, rng, 0, 10));
    nd::backward(masked_loss<double>(pred, {&gt, 1}, {kind, 1.0}));
    for (int i = 0; i < 6; ++i) {
      if (!gt.mask[i]) EXPECT_EQ(pred.grad()[i], 0.0);
      else EXPECT_NE(pred.grad()[i], 0.0);
    }
  }
}

TEST(MaskedLoss, Errors) {
  const auto empty = gt_from({0, 0}, 1, 2);
  auto pred = V::constant(nd::Tensor<double>({1, 1, 1, 2}));
  EXPECT_THROW(masked_loss<double>(pred, {&empty, 1}, {}), DataError);
  const auto gt = gt_from({1, 2, 3}, 1, 3);
  EXPECT_THROW(masked_loss<double>(pred, {&gt, 1}, {}), std::invalid_argument);
  const auto gt2 = gt_from({1, 2}, 1, 2);
  EXPECT_THROW(masked_loss<double>(pred, {&gt2, 1}, {LossKind::Combined, -1.0}), ConfigError);
  EXPECT_THROW(parse_loss_kind("l1"), ConfigError);
  EXPECT_EQ(parse_loss_kind(to_string(LossKind::SmoothL1)), LossKind::SmoothL1);
}

TEST(Metrics, PerfectPredictionIsZero) {
  const auto gt = gt_from({2, 0, 4, 9}, 2, 2);
  const std::vector<float> pred{2, 123, 4, 9};
  const auto r = metrics(pred, gt);
  EXPECT_EQ(r.rmse_mm, 0.0);
  EXPECT_EQ(r.mae_mm, 0.0);
  EXPECT_EQ(r.irmse, 0.0);
  EXPECT_EQ(r.imae, 0.0);
  EXPECT_EQ(r.pixel_count, 3u);
}

TEST(Metrics, HandExample) {
  const auto gt = gt_from({2, 4}, 1, 2);
  const std::vector<double> pred{2.1, 3.8};
  MetricAccumulator acc;
  acc.add(pred, gt);
  const auto r = acc.report();
  EXPECT_NEAR(r.mae_mm, 150.0, 1e-6);
  EXPECT_NEAR(r.rmse_mm, 1000.0 * std::sqrt(0.025), 1e-6);
  EXPECT_NEAR(r.rmse_mm, 158.11, 5e-3);
  const double i1 = 1000.0 / 2.1 - 500.0, i2 = 1000.0 / 3.8 - 250.0;
  EXPECT_NEAR(r.imae, (std::abs(i1) + std::abs(i2)) / 2, 1e-9);
  EXPECT_NEAR(r.irmse, std::sqrt((i1 * i1 + i2 * i2) / 2), 1e-9);
}

TEST(Metrics, RmseAtLeastMaeAndScaling) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> g(40);
    std::vector<double> p(40), p2(40);
    for (int i = 0; i < 40; ++i) {
      g[i] = i > 0 && uniform01(rng) < 0.3 ? 0.0f : static_cast<float>(uniform(rng, 1, 80));
      p[i] = g[i] + uniform(rng, -3, 3);
      p2[i] = g[i] + 2.0 * (p[i] - g[i]);
    }
    const auto gt = gt_from(g, 5, 8);
    MetricAccumulator a, b;
    a.add(p, gt);
    b.add(p2, gt);
    const auto r = a.report(), s = b.report();
    EXPECT_GE(r.rmse_mm, r.mae_mm);
    EXPECT_GE(r.irmse, r.imae);
    EXPECT_NEAR(s.rmse_mm, 2 * r.rmse_mm, 1e-6 * r.rmse_mm);
    EXPECT_NEAR(s.mae_mm, 2 * r.mae_mm, 1e-6 * r.mae_mm);
  }
}

TEST(Metrics, EqualAbsoluteErrorsGiveRmseEqualMae) {
  const auto gt = gt_from({2, 4, 6}, 1, 3);
  const std::vector<double> pred{2.5, 3.5, 6.5};
  MetricAccumulator acc;
  acc.add(pred, gt);
  EXPECT_NEAR(acc.report().rmse_mm, acc.report().mae_mm, 1e-9);
}

TEST(Metrics, InverseFloorAppliedAndReported) {
  const auto gt = gt_from({2, 4}, 1, 2);
  const std::vector<double> pred{-1.0, 4.0};
  MetricAccumulator acc;
  acc.add(pred, gt);
  const auto r = acc.report();
  EXPECT_EQ(r.floored_count, 1u);
  EXPECT_NEAR(r.imae, (1000.0 / 1e-3 - 500.0) / 2, 1e-6);
  EXPECT_NE(r.to_text().find("inverse_floor_hits=1"), std::string::npos);
}

TEST(Metrics, PoolsPixelsAcrossFrames) {
  const auto g1 = gt_from({2}, 1, 1);
  const auto g2 = gt_from({4, 4, 4}, 1, 3);
  MetricAccumulator acc;
  acc.add(std::vector<double>{3}, g1);
  acc.add(std::vector<double>{4, 4, 4}, g2);
  EXPECT_NEAR(acc.report().mae_mm, 250.0, 1e-9);  // pooled, not mean of per-frame maes
}

TEST(Metrics, EmptyMaskIsAnError) {
  const auto gt = gt_from({0, 0}, 1, 2);
  EXPECT_THROW(metrics(std::vector<float>{1, 1}, gt), DataError);
}

TEST(Metrics, ReportFormat) {
  MetricReport r;
  r.rmse_mm = 752.876;
  r.mae_mm = 221.19;
  r.irmse = 2.343;
  r.imae = 1.14;
  r.pixel_count = 10;
  const auto text = r.to_text();
  EXPECT_NE(text.find("rmse_mm=752.88\n"), std::string::npos);
  EXPECT_NE(text.find("mae_mm=221.19\n"), std::string::npos);
  EXPECT_NE(text.find("irmse_per_km=2.34\n"), std::string::npos);
  EXPECT_NE(text.find("imae_per_km=1.14\n"), std::string::npos);
  const auto header = MetricReport::table_header();
  for (const char* col : {"RMSE (mm)", "MAE (mm)", "iRMSE (1/km)", "iMAE (1/km)"}) {
    EXPECT_NE(header.find(col), std::string::npos) << col;
  }
  EXPECT_NE(r.table_row("all").find("752.88"), std::string::npos);
}
