#include <gtest/gtest.h>

#include <filesystem>

#include "fusenet/errors.hpp"
#include "fusenet/geometry.hpp"
#include "test_util.hpp"

using namespace fusenet;
using namespace fusenet::geometry;
using fusenet::testing::random_tensor;
using V = nd::Var<double>;

namespace {

Intrinsics camera(int w = 40, int h = 30) { return {50.0, 55.0, 19.5, 14.5, w, h}; }

PixelMap single_frame_map(std::vector<int> u, std::vector<int> v, int h, int w) {
  PixelMap m;
  m.u = std::move(u);
  m.v = std::move(v);
  m.in_bounds.assign(m.u.size(), 1);
  m.batch.assign(m.u.size(), 0);
  m.height = h;
  m.width = w;
  return m;
}

}  // namespace

TEST(Unproject, PrincipalPointRay) {
  Intrinsics K{100, 100, 3, 2, 8, 6};
  DepthImage d(6, 8);
  d.set(3, 2, 5.0f);
  const auto pts = unproject(d, K);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts.coords[0], (Point3{0, 0, 5}));
}

TEST(Unproject, DirectFormula) {
  Intrinsics K{100, 100, 0, 0, 128, 4};
  DepthImage d(4, 128);
  d.set(100, 0, 2.0f);
  const auto pts = unproject(d, K);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_DOUBLE_EQ(pts.coords[0][0], 2.0);
  EXPECT_DOUBLE_EQ(pts.coords[0][1], 0.0);
  EXPECT_DOUBLE_EQ(pts.coords[0][2], 2.0);
}

TEST(Unproject, RowMajorOrderAndErrors) {
  const auto K = camera();
  DepthImage d(30, 40);
  EXPECT_THROW(unproject(d, K), DataError);
  d.set(5, 7, 3.0f);
  d.set(2, 1, 4.0f);
  d.set(9, 1, 2.0f);
  const auto pts = unproject(d, K);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_FLOAT_EQ(pts.coords[0][2], 4.0f);
  EXPECT_FLOAT_EQ(pts.coords[1][2], 2.0f);
  EXPECT_FLOAT_EQ(pts.coords[2][2], 3.0f);
  EXPECT_THROW(unproject(d, camera(41, 30)), DataError);
}

TEST(Project, PrincipalRayAndBounds) {
  const auto K = camera();
  PointSet p;
  p.coords = {{0, 0, 5}, {(40 + 3 - K.cx) * 5 / K.fx, 0, 5}};
  const auto m = project(p, K, 1.0);
  EXPECT_EQ(m.u[0], static_cast<int>(std::lround(K.cx)));
  EXPECT_EQ(m.v[0], static_cast<int>(std::lround(K.cy)));
  EXPECT_TRUE(m.in_bounds[0]);
  EXPECT_EQ(m.u[1], 43);
  EXPECT_FALSE(m.in_bounds[1]);
  EXPECT_EQ(m.size(), 2u);  // flagged, not dropped
}

TEST(Project, RejectsPointsBehindCamera) {
  PointSet p;
  p.coords = {{0, 0, 5}, {1, 1, 0}};
  EXPECT_THROW(project(p, camera(), 1.0), DataError);
  p.coords[1][2] = -2;
  EXPECT_THROW(project(p, camera(), 1.0), DataError);
}

TEST(Project, UnprojectRoundTripIsExact) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Intrinsics K{uniform(rng, 30, 300), uniform(rng, 30, 300), uniform(rng, 0, 63), uniform(rng, 0, 47), 64, 48};
    DepthImage d(48, 64);
    for (int i = 0; i < 200; ++i) {
      d.set(static_cast<int>(uniform_index(rng, 64)), static_cast<int>(uniform_index(rng, 48)),
            static_cast<float>(uniform(rng, 0.5, 80.0)));
    }
    const auto pts = unproject(d, K);
    const auto m = project(pts, K, 1.0);
    std::size_t j = 0;
    for (int v = 0; v < 48; ++v)
      for (int u = 0; u < 64; ++u) {
        if (!d.observed(u, v)) continue;
        ASSERT_EQ(m.u[j], u);
        ASSERT_EQ(m.v[j], v);
        ASSERT_TRUE(m.in_bounds[j]);
        ++j;
      }
  }
}

TEST(Project, HalfScaleFollowsStride2Cells) {
  Intrinsics K{10, 10, 0, 0, 8, 6};
  DepthImage d(6, 8);
  for (int u = 0; u < 8; ++u) d.set(u, 5, 1.0f);
  const auto m = project(unproject(d, K), K, 0.5);
  EXPECT_EQ(m.width, 4);
  EXPECT_EQ(m.height, 3);
  for (int u = 0; u < 8; ++u) {
    EXPECT_EQ(m.u[u], u / 2);
    EXPECT_EQ(m.v[u], 2);
  }
}

TEST(Gather, ExactRowsAndZeroOutside) {
  nd::Tensor<double> f({2, 3, 4});
  for (std::size_t i = 0; i < f.numel(); ++i) f[i] = static_cast<double>(i);
  auto m = single_frame_map({1, 3, 7}, {0, 2, 0}, 3, 4);
  m.in_bounds[2] = 0;
  const auto g = gather(V::constant(f), m);
  ASSERT_EQ(g.shape(), (nd::Shape{3, 2}));
  EXPECT_EQ(g.value()[0], 1.0);
  EXPECT_EQ(g.value()[1], 13.0);
  EXPECT_EQ(g.value()[2], 11.0);
  EXPECT_EQ(g.value()[3], 23.0);
  EXPECT_EQ(g.value()[4], 0.0);
  EXPECT_EQ(g.value()[5], 0.0);
}

TEST(Scatter, NoCollisionIsDirectAssignment) {
  auto m = single_frame_map({0, 2}, {1, 0}, 2, 3);
  const auto pf = nd::Tensor<double>::from({2, 1}, {4.0, -2.0});
  const auto s = scatter(V::constant(pf), m, 1);
  ASSERT_EQ(s.shape(), (nd::Shape{1, 1, 2, 3}));
  EXPECT_EQ(s.value().storage(), (std::vector<double>{0, 0, -2, 4, 0, 0}));
}

TEST(Scatter, CollisionAverages) {
  auto m = single_frame_map({1, 1}, {1, 1}, 2, 2);
  const auto pf = nd::Tensor<double>::from({2, 2}, {1.0, 10.0, 3.0, 20.0});
  const auto s = scatter(V::constant(pf), m, 1);
  EXPECT_DOUBLE_EQ(s.value().at(0, 0, 1, 1), 2.0);
  EXPECT_DOUBLE_EQ(s.value().at(0, 1, 1, 1), 15.0);
}

TEST(Scatter, EmptyMaskGivesZeroMap) {
  auto m = single_frame_map({0, 1}, {0, 1}, 2, 2);
  m.in_bounds = {0, 0};
  const auto s = scatter(V::constant(nd::Tensor<double>({2, 3}, 5.0)), m, 1);
  for (double v : s.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Scatter, GatherAfterScatterIsIdentityOnInjectiveSets) {
  Rng rng(3);
  auto m = single_frame_map({0, 3, 2, 1}, {1, 0, 2, 2}, 3, 4);
  const auto pf = random_tensor({4, 5}, rng);
  const auto back = gather(scatter(V::constant(pf), m, 1), m);
  EXPECT_EQ(back.value().storage(), pf.storage());

  // and the reverse restricts the map to the touched pixels
  const auto map = random_tensor({1, 5, 3, 4}, rng);
  const auto sparse = scatter(gather(V::constant(map), m), m, 1);
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t i = 0; i < 4; ++i) {
      const auto u = static_cast<std::size_t>(m.u[i]), v = static_cast<std::size_t>(m.v[i]);
      EXPECT_EQ(sparse.value().at(0, c, v, u), map.at(0, c, v, u));
    }
}

TEST(Scatter, BackwardConservesGradientMass) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 10);
    std::vector<int> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<int>(uniform_index(rng, 3)), v[i] = static_cast<int>(uniform_index(rng, 2));
    auto m = single_frame_map(u, v, 2, 3);
    m.in_bounds[0] = 0;
    auto pf = V::parameter(random_tensor({n, 2}, rng));
    const auto s = scatter(pf, m, 1);
    const auto up = random_tensor(s.shape(), rng);
    nd::backward(s, &up);
    double into_points = 0, at_touched = 0;
    for (double g : pf.grad().storage()) into_points += g;
    std::vector<bool> touched(6, false);
    for (std::size_t i = 0; i < n; ++i)
      if (m.in_bounds[i]) touched[static_cast<std::size_t>(m.v[i] * 3 + m.u[i])] = true;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t p = 0; p < 6; ++p)
        if (touched[p]) at_touched += up[c * 6 + p];
    EXPECT_NEAR(into_points, at_touched, 1e-12);
  }
}

TEST(Gather, BackwardScatterAddsIntoMap) {
  auto m = single_frame_map({1, 1, 0}, {0, 0, 1}, 2, 2);
  auto f = V::parameter(nd::Tensor<double>({1, 1, 2, 2}));
  const auto up = nd::Tensor<double>::from({3, 1}, {1.0, 2.0, 5.0});
  nd::backward(gather(f, m), &up);
  EXPECT_EQ(f.grad().storage(), (std::vector<double>{0, 3, 5, 0}));
}

TEST(Intrinsics, FileRoundTripAndValidation) {
  const auto path = std::filesystem::temp_directory_path() / "fusenet_intr_test.txt";
  const Intrinsics K{721.5377, 721.5377, 609.5593, 172.854, 1242, 375};
  K.save(path);
  const auto L = Intrinsics::load(path);
  EXPECT_EQ(L.fx, K.fx);
  EXPECT_EQ(L.cy, K.cy);
  EXPECT_EQ(L.width, K.width);
  EXPECT_EQ(L.height, K.height);
  std::filesystem::remove(path);
  EXPECT_THROW(Intrinsics::parse("1 2 3"), DataError);
  EXPECT_THROW(Intrinsics::parse("0 1 0 0 10 10").validate(), ConfigError);
  const auto C = K.cropped(10, 20, 100, 50);
  EXPECT_DOUBLE_EQ(C.cx, K.cx - 10);
  EXPECT_DOUBLE_EQ(C.cy, K.cy - 20);
}

TEST(DepthImageType, MaskInvariants) {
  DepthImage d(2, 2);
  d.set(0, 0, 3.0f);
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(d.set(1, 0, -1.0f), DataError);
  d.values[3] = 2.0f;  // value without mask
  EXPECT_THROW(d.validate(), DataError);
}
