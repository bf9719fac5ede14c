#include <gtest/gtest.h>

#include <set>

#include "fusenet/errors.hpp"
#include "fusenet/fusenet.hpp"
#include "fusenet/ops.hpp"
#include "test_util.hpp"

using namespace fusenet;
using namespace fusenet::model;
using fusenet::testing::random_tensor;
using V = nd::Var<double>;

namespace {

/// Points in front of a camera whose half-scale grid is `grid` x `grid`.
PointGeometry random_geometry(Rng& rng, std::size_t n, std::size_t k, int grid) {
  const geometry::Intrinsics K{double(grid), double(grid), grid - 0.5, grid - 0.5, 2 * grid, 2 * grid};
  geometry::PointSet ps;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = uniform(rng, 2, 6);
    ps.coords.push_back({uniform(rng, -0.9, 0.9) * z, uniform(rng, -0.9, 0.9) * z, z});
  }
  PointGeometry g;
  g.table = neighbors::precompute_table(ps, k);
  g.pixels = geometry::project(ps, K, 0.5);
  g.batch = 1;
  return g;
}

void set_eval(FuseBlock<double>& b) {
  nd::ParamSet<double> ps;
  b.collect("b", ps);
  ps.set_training(false);
}

/// Block forward with an additive change to one point's gathered feature.
nd::Tensor<double> block_with_point_delta(FuseBlock<double>& b, const V& x, const PointGeometry& g, std::size_t point,
                                          double delta) {
  auto f = geometry::gather(x, g.pixels).value();
  for (std::size_t c = 0; c < f.dim(1); ++c) f[point * f.dim(1) + c] += delta;
  auto p = b.cont2->forward(b.cont1->forward(V::constant(f), g.table), g.table);
  auto sum = nd::add(nd::add(b.stride1->forward(x),
                             nd::upsample2x_bilinear(b.stride2_conv->forward(b.stride2_down->forward(x)))),
                     geometry::scatter(p, g.pixels, 1));
  auto out = b.fuse->forward(sum);
  if (b.has_shortcut()) out = nd::add(out, x);
  return out.value();
}

dataio::Frame square_frame(std::uint64_t seed) {
  dataio::SyntheticSceneConfig sc;
  sc.height = 64;
  sc.width = 64;
  sc.seed = seed;
  return dataio::synth_generate(sc);
}

}  // namespace

TEST(BranchSetType, ParseAndPrint) {
  EXPECT_EQ(BranchSet::parse("s1,s2,cont"), BranchSet::all());
  EXPECT_EQ(BranchSet::parse("cont,s1").str(), "s1,cont");
  EXPECT_THROW(BranchSet::parse(""), ConfigError);
  EXPECT_THROW(BranchSet::parse("s3"), ConfigError);
}

TEST(FuseBlockTest, OutputShapeEqualsInputShape) {
  Rng rng(1);
  const auto g = random_geometry(rng, 6, 3, 8);
  FuseBlock<double> block(4, 4, BranchSet::all(), rng);
  const auto y = block.forward(V::constant(random_tensor({1, 4, 8, 8}, rng)), g);
  EXPECT_EQ(y.shape(), (nd::Shape{1, 4, 8, 8}));
}

TEST(FuseBlockTest, ShortcutRule) {
  Rng rng(2);
  EXPECT_FALSE(FuseBlock<double>(48, 16, BranchSet::all(), rng).has_shortcut());
  EXPECT_TRUE(FuseBlock<double>(48, 48, BranchSet::all(), rng).has_shortcut());
  EXPECT_TRUE(FuseBlock<double>(16, 16, BranchSet::all(), rng).has_shortcut());
  FuseBlock<double> b(8, 4, BranchSet::all(), rng);
  const auto g = random_geometry(rng, 6, 3, 4);
  EXPECT_THROW(b.forward(V::constant(nd::Tensor<double>({1, 4, 4, 4})), g), std::invalid_argument);
}

TEST(FuseBlockTest, ZeroedPointBranchEqualsTwoDimensionalAblation) {
  Rng rng(3);
  const auto g = random_geometry(rng, 10, 3, 8);
  FuseBlock<double> full(4, 4, BranchSet::all(), rng);
  FuseBlock<double> flat(4, 4, BranchSet::parse("s1,s2"), rng);
  nd::ParamSet<double> pf, pa;
  full.collect("b", pf);
  flat.collect("b", pa);
  for (auto& a : pa.params) {
    for (auto& f : pf.params)
      if (f.name == a.name) a.var.mutable_value() = f.var.value();
  }
  full.cont2->bn.gamma.mutable_value().fill(0);
  full.cont2->bn.beta.mutable_value().fill(0);
  const auto x = V::constant(random_tensor({1, 4, 8, 8}, rng));
  EXPECT_EQ(full.forward(x, g).value().storage(), flat.forward(x, PointGeometry{}).value().storage());
}

TEST(FuseBlockTest, PointInfluenceIsLocalToScatterNeighborhood) {
  Rng rng(4);
  const int grid = 16;
  const auto g = random_geometry(rng, 14, 2, grid);
  FuseBlock<double> block(4, 4, BranchSet::all(), rng);
  set_eval(block);
  const auto x = V::constant(random_tensor({1, 4, grid, grid}, rng));
  for (std::size_t p = 0; p < 14; ++p) {
    if (!g.pixels.in_bounds[p]) continue;
    const auto base = block_with_point_delta(block, x, g, p, 0.0);
    const auto moved = block_with_point_delta(block, x, g, p, 0.5);
    // Points whose second-layer output can see p: two hops back along the table.
    std::set<std::size_t> hop1{p}, hop2;
    for (std::size_t i = 0; i < g.table.rows; ++i)
      for (std::size_t k = 0; k < g.table.k; ++k)
        if (g.table.index(i, k) == p) hop1.insert(i);
    for (std::size_t i = 0; i < g.table.rows; ++i)
      for (std::size_t k = 0; k < g.table.k; ++k)
        if (hop1.count(g.table.index(i, k))) hop2.insert(i);
    std::vector<bool> reach(grid * grid, false);
    for (auto i : hop2) {
      if (!g.pixels.in_bounds[i]) continue;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int u = g.pixels.u[i] + du, v = g.pixels.v[i] + dv;
          if (u >= 0 && v >= 0 && u < grid && v < grid) reach[v * grid + u] = true;
        }
    }
    bool changed_at_self = false;
    for (std::size_t c = 0; c < 4; ++c)
      for (int pix = 0; pix < grid * grid; ++pix) {
        const std::size_t i = c * grid * grid + pix;
        if (!reach[pix]) {
          ASSERT_EQ(base[i], moved[i]) << "point " << p << " pixel " << pix;
        }
        if (pix == g.pixels.v[p] * grid + g.pixels.u[p] && base[i] != moved[i]) changed_at_self = true;
      }
    EXPECT_TRUE(changed_at_self) << "point " << p;
  }
}

TEST(FuseNetTest, OutputMatchesInputExtents) {
  FuseNetConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 2;
  FuseNet<float> net(cfg, 1);
  const auto f = square_frame(1);
  Rng rng(0);
  const auto y = net.predict({&f, 1}, rng);
  EXPECT_EQ(y.shape(), (nd::Shape{1, 1, 64, 64}));
}

TEST(FuseNetTest, SameSeedGivesBitIdenticalPredictions) {
  FuseNetConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 2;
  const auto f = square_frame(2);
  auto run = [&] {
    FuseNet<float> net(cfg, 7);
    Rng rng(3);
    return net.predict({&f, 1}, rng).value().storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(FuseNetTest, RejectsEmptySparseDepthAndBadExtents) {
  FuseNetConfig cfg;
  cfg.channels = 4;
  cfg.blocks = 1;
  FuseNet<float> net(cfg, 0);
  auto f = square_frame(3);
  Rng rng(0);
  auto empty = f;
  empty.sparse = geometry::DepthImage(64, 64);
  EXPECT_THROW(net.predict({&empty, 1}, rng), DataError);
  auto cropped = dataio::crop(f, 0, 0, 62, 64);
  EXPECT_THROW(net.predict({&cropped, 1}, rng), std::invalid_argument);
}

TEST(FuseNetTest, ParamCountGrowsLinearlyInBlocks) {
  for (std::size_t c : {8, 16, 32}) {
    std::vector<std::size_t> counts;
    for (std::size_t n = 1; n <= 5; ++n) {
      FuseNetConfig cfg;
      cfg.channels = c;
      cfg.blocks = n;
      counts.push_back(param_count(cfg));
    }
    for (std::size_t i = 1; i < counts.size(); ++i) EXPECT_GT(counts[i], counts[i - 1]);
    for (std::size_t i = 2; i < counts.size(); ++i) EXPECT_EQ(counts[i] - counts[i - 1], counts[2] - counts[1]);
  }
}

TEST(FuseNetTest, PerBlockCountHandCheck) {
  // s1: 9C^2+C+2C, s2: 2(9C^2+C+2C), cont: 2(3*C/2+C/2 + C/2*C+C + C^2 + 2C), fuse: 9C^2+C+2C
  const std::size_t C = 32;
  const std::size_t conv = 9 * C * C + 3 * C;
  const std::size_t cont = 3 * (C / 2) + C / 2 + (C / 2) * C + C + C * C + 2 * C;
  FuseNetConfig a, b;
  a.channels = b.channels = C;
  a.blocks = 2;
  b.blocks = 3;
  EXPECT_EQ(param_count(b) - param_count(a), 4 * conv + 2 * cont);
}

TEST(FuseNetTest, AblationSubsets) {
  FuseNetConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 2;
  const auto full = ablate<float>(cfg, BranchSet::all(), 0);
  EXPECT_EQ(full->param_count(), FuseNet<float>(cfg, 0).param_count());
  const auto no_s2 = ablate<float>(cfg, BranchSet::parse("s1,cont"), 0);
  const auto flat = ablate<float>(cfg, BranchSet::parse("s1,s2"), 0);
  EXPECT_FALSE(flat->needs_points());
  EXPECT_TRUE(no_s2->needs_points());
  EXPECT_LT(no_s2->param_count(), full->param_count());
  EXPECT_LT(flat->param_count(), full->param_count());
  EXPECT_THROW(ablate<float>(cfg, BranchSet{false, false, false}, 0), ConfigError);
  EXPECT_EQ(flat->block(0).cont1, nullptr);
}

TEST(FuseNetConfigType, Validation) {
  FuseNetConfig cfg;
  cfg.channels = 7;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.channels = 8;
  cfg.blocks = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.blocks = 1;
  cfg.neighbors = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(FuseNetTest, GeometryNeedsAtLeastKPoints) {
  geometry::DepthImage d(8, 8);
  d.set(1, 1, 2.0f);
  d.set(5, 3, 4.0f);
  const geometry::Intrinsics K{8, 8, 3.5, 3.5, 8, 8};
  Rng rng(0);
  EXPECT_THROW(build_point_geometry({&d, 1}, {&K, 1}, 3, 100, rng), DataError);
  const auto g = build_point_geometry({&d, 1}, {&K, 1}, 2, 100, rng);
  EXPECT_EQ(g.table.rows, 2u);
  EXPECT_EQ(g.pixels.width, 4);
}
