#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fusenet/errors.hpp"
#include "fusenet/neighbors.hpp"
#include "fusenet/rng.hpp"

using namespace fusenet;
using namespace fusenet::neighbors;

namespace {

std::vector<Point3> random_cloud(Rng& rng, std::size_t n, double extent = 10.0) {
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, 1, 1 + extent)};
  return pts;
}

double dist2(const Point3& a, const Point3& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(KdTree, SinglePointIsSingleLeaf) {
  const std::vector<Point3> pts{{1, 2, 3}};
  KdTree tree(pts);
  EXPECT_EQ(tree.node_count(), 1u);
  EXPECT_EQ(tree.leaf_count(), 1u);
  EXPECT_EQ(tree.query({0, 0, 0}, 1), (std::vector<std::uint32_t>{0}));
}

TEST(KdTree, EveryPointInExactlyOneLeaf) {
  Rng rng(1);
  const auto pts = random_cloud(rng, 1000);
  KdTree tree(pts, 4);
  for (auto c : tree.leaf_membership_counts()) ASSERT_EQ(c, 1u);
  EXPECT_LE(tree.depth(), 12u);  // balanced: ceil(log2(1000/4)) + 1 levels
}

TEST(KdTree, MatchesBruteForceOnUniformPoints) {
  Rng rng(2);
  const auto pts = random_cloud(rng, 1000);
  KdTree tree(pts);
  for (int q = 0; q < 500; ++q) {
    const Point3 p{uniform(rng, -12, 12), uniform(rng, -12, 12), uniform(rng, 0, 13)};
    for (std::size_t k : {1, 3, 9}) ASSERT_EQ(tree.query(p, k), brute_force_knn(pts, p, k));
  }
}

TEST(KdTree, CollinearHandExample) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  KdTree tree(pts, 1);
  auto r = tree.query({1.4, 0, 0}, 2);
  EXPECT_EQ(r, (std::vector<std::uint32_t>{1, 2}));
}

TEST(KdTree, SelfIsNearest) {
  Rng rng(3);
  const auto pts = random_cloud(rng, 200);
  KdTree tree(pts);
  for (std::uint32_t i = 0; i < pts.size(); ++i) ASSERT_EQ(tree.query(pts[i], 1)[0], i);
}

TEST(KdTree, DuplicatesRetainedAndTiesByIndex) {
  std::vector<Point3> pts(20, Point3{1, 1, 1});
  pts.push_back({5, 5, 5});
  KdTree tree(pts, 2);
  for (auto c : tree.leaf_membership_counts()) ASSERT_EQ(c, 1u);
  const auto r = tree.query({1, 1, 1}, 20);
  std::vector<std::uint32_t> expect(20);
  std::iota(expect.begin(), expect.end(), 0u);
  EXPECT_EQ(r, expect);
  EXPECT_EQ(tree.query({1, 1, 1}, 21).back(), 20u);
}

TEST(KdTree, TiesOnLatticeMatchBruteForce) {
  std::vector<Point3> pts;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 1; z < 4; ++z) pts.push_back({double(x), double(y), double(z)});
  KdTree tree(pts, 3);
  Rng rng(4);
  for (int q = 0; q < 300; ++q) {
    const Point3 p{double(uniform_index(rng, 12)) * 0.5, double(uniform_index(rng, 12)) * 0.5, 1.0 + double(uniform_index(rng, 5)) * 0.5};
    for (std::size_t k : {1, 4, 7, 15}) ASSERT_EQ(tree.query(p, k), brute_force_knn(pts, p, k));
  }
}

TEST(KdTree, Errors) {
  std::vector<Point3> pts{{0, 0, 1}, {1, 0, 1}};
  KdTree tree(pts);
  EXPECT_THROW(tree.query({0, 0, 0}, 3), std::invalid_argument);
  EXPECT_THROW(tree.query({0, 0, 0}, 0), std::invalid_argument);
  EXPECT_THROW(brute_force_knn(pts, {0, 0, 0}, 3), std::invalid_argument);
  pts.push_back({std::nan(""), 0, 1});
  EXPECT_THROW(KdTree{pts}, DataError);
  EXPECT_THROW(KdTree{std::vector<Point3>{}}, std::invalid_argument);
}

TEST(BruteForce, KEqualsNReturnsEverything) {
  Rng rng(5);
  const auto pts = random_cloud(rng, 17);
  auto r = brute_force_knn(pts, {0, 0, 0}, 17);
  std::sort(r.begin(), r.end());
  std::vector<std::uint32_t> all(17);
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(r, all);
}

TEST(NeighborTable, KOneIsSelfWithZeroOffset) {
  Rng rng(6);
  geometry::PointSet ps{random_cloud(rng, 50)};
  const auto t = precompute_table(ps, 1);
  for (std::uint32_t i = 0; i < 50; ++i) {
    EXPECT_EQ(t.index(i, 0), i);
    EXPECT_EQ(t.offset(i, 0), (Point3{0, 0, 0}));
  }
}

TEST(NeighborTable, RowsMatchBruteForceAndAreMonotone) {
  Rng rng(7);
  geometry::PointSet ps{random_cloud(rng, 2000, 20)};
  const auto t = precompute_table(ps);  // default K = 9
  EXPECT_EQ(t.k, 9u);
  const auto b = brute_force_table(ps, 9);
  EXPECT_EQ(t.indices, b.indices);
  EXPECT_EQ(t.offsets, b.offsets);
  for (std::size_t i = 0; i < t.rows; ++i) {
    EXPECT_EQ(t.index(i, 0), i);
    for (std::size_t j = 1; j < t.k; ++j) {
      const auto& xi = ps.coords[i];
      const double d0 = dist2(xi, ps.coords[t.index(i, j - 1)]);
      const double d1 = dist2(xi, ps.coords[t.index(i, j)]);
      ASSERT_LE(d0, d1);
      if (d0 == d1 && j > 1) {
        ASSERT_LT(t.index(i, j - 1), t.index(i, j));
      }
      const auto o = t.offset(i, j);
      const auto& xk = ps.coords[t.index(i, j)];
      for (int a = 0; a < 3; ++a) ASSERT_EQ(o[a], xi[a] - xk[a]);
    }
  }
}

TEST(NeighborTable, SelfFirstEvenWithDuplicates) {
  geometry::PointSet ps;
  ps.coords = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {3, 0, 2}};
  const auto t = precompute_table(ps, 3);
  EXPECT_EQ(t.index(2, 0), 2u);
  EXPECT_EQ(t.index(2, 1), 0u);
  EXPECT_EQ(t.index(2, 2), 1u);
}

TEST(NeighborTable, AblationKValuesConstruct) {
  Rng rng(8);
  geometry::PointSet ps{random_cloud(rng, 300)};
  for (std::size_t k : {3, 6, 9, 12, 15}) {
    const auto t = precompute_table(ps, k);
    EXPECT_EQ(t.indices.size(), 300 * k);
    EXPECT_EQ(t.offsets.size(), 300 * k * 3);
  }
  EXPECT_THROW(precompute_table(ps, 301), std::invalid_argument);
}

TEST(NeighborTable, DeterministicBuild) {
  Rng rng(9);
  geometry::PointSet ps{random_cloud(rng, 500)};
  EXPECT_EQ(precompute_table(ps, 9).indices, precompute_table(ps, 9).indices);
}
