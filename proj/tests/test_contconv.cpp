#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fusenet/contconv.hpp"
#include "fusenet/ops.hpp"
#include "test_util.hpp"

using namespace fusenet;
using namespace fusenet::contconv;
using fusenet::testing::random_tensor;
using V = nd::Var<double>;

namespace {

geometry::PointSet random_points(Rng& rng, std::size_t n) {
  geometry::PointSet ps;
  for (std::size_t i = 0; i < n; ++i) ps.coords.push_back({uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 3, 6)});
  return ps;
}

void zero_biases(ContConvLayer<double>& layer) {
  layer.mlp_hidden.bias.mutable_value().fill(0);
  layer.mlp_out.bias.mutable_value().fill(0);
}

}  // namespace

/// Direct evaluation of h_i = W (sum_k MLP(x_i - x_k) * f_k).
std::vector<double> oracle(const ContConvLayer<double>& L, const nd::Tensor<double>& f,
                           const neighbors::NeighborTable& t) {
  const std::size_t n = t.rows, cin = L.in_width(), cout = L.out_width(), hid = cin / 2;
  const auto& w1 = L.mlp_hidden.weight.value();
  const auto& b1 = L.mlp_hidden.bias.value();
  const auto& w2 = L.mlp_out.weight.value();
  const auto& b2 = L.mlp_out.bias.value();
  const auto& W = L.transform.weight.value();
  std::vector<double> out(n * cout, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> agg(cin, 0.0);
    for (std::size_t k = 0; k < t.k; ++k) {
      const auto off = t.offset(i, k);
      std::vector<double> h(hid);
      for (std::size_t a = 0; a < hid; ++a) {
        double s = b1[a];
        for (int d = 0; d < 3; ++d) s += w1[a * 3 + d] * off[d];
        h[a] = s > 0 ? s : 0;
      }
      for (std::size_t c = 0; c < cin; ++c) {
        double m = b2[c];
        for (std::size_t a = 0; a < hid; ++a) m += w2[c * hid + a] * h[a];
        agg[c] += m * f[t.index(i, k) * cin + c];
      }
    }
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c) out[i * cout + o] += W[o * cin + c] * agg[c];
  }
  return out;
}

TEST(ContConv, IdentityConfiguration) {
  Rng rng(1);
  const auto pts = random_points(rng, 6);
  const auto table = neighbors::precompute_table(pts, 1);
  ContConvLayer<double> L(4, 4, rng);
  L.mlp_out.weight.mutable_value().fill(0);
  L.mlp_out.bias.mutable_value().fill(1);
  auto& W = L.transform.weight.mutable_value();
  W.fill(0);
  for (std::size_t i = 0; i < 4; ++i) W[i * 4 + i] = 1;
  const auto f = random_tensor({6, 4}, rng);
  EXPECT_EQ(L.forward_raw(V::constant(f), table).value().storage(), f.storage());
}

TEST(ContConv, MatchesOracleSmall) {
  Rng rng(2);
  const auto pts = random_points(rng, 5);
  const auto table = neighbors::precompute_table(pts, 2);
  ContConvLayer<double> L(4, 4, rng);
  const auto f = random_tensor({5, 4}, rng);
  const auto got = L.forward_raw(V::constant(f), table).value().storage();
  const auto want = oracle(L, f, table);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10 * std::max(1.0, std::abs(want[i])));
}

TEST(ContConv, ZeroFeaturesGiveZeroOutput) {
  Rng rng(3);
  const auto table = neighbors::precompute_table(random_points(rng, 7), 3);
  ContConvLayer<double> L(6, 4, rng);
  zero_biases(L);
  const auto y = L.forward_raw(V::constant(nd::Tensor<double>({7, 6})), table);
  for (double v : y.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(ContConv, RawIsHomogeneousInFeatures) {
  Rng rng(4);
  const auto table = neighbors::precompute_table(random_points(rng, 9), 4);
  ContConvLayer<double> L(4, 6, rng);
  zero_biases(L);
  const auto f = random_tensor({9, 4}, rng);
  auto f2 = f;
  for (auto& v : f2.storage()) v *= 2;
  const auto a = L.forward_raw(V::constant(f), table).value();
  const auto b = L.forward_raw(V::constant(f2), table).value();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(b[i], 2 * a[i], 1e-12);
}

TEST(ContConv, PermutationEquivariance) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 12;
    const auto pts = random_points(rng, n);
    const auto table = neighbors::precompute_table(pts, 4);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    ContConvLayer<double> L(4, 4, rng);
    const auto f = random_tensor({n, 4}, rng);
    nd::Tensor<double> fp({n, 4});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) fp[perm[i] * 4 + c] = f[i * 4 + c];
    const auto a = L.forward(V::constant(f), table).value();
    const auto b = L.forward(V::constant(fp), table.permuted(perm)).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) ASSERT_NEAR(b[perm[i] * 4 + c], a[i * 4 + c], 1e-12);
  }
}

TEST(ContConv, OutputRowDependsOnlyOnNeighborRows) {
  Rng rng(6);
  const std::size_t n = 30;
  const auto table = neighbors::precompute_table(random_points(rng, n), 3);
  ContConvLayer<double> L(4, 4, rng);
  const auto f = random_tensor({n, 4}, rng);
  const auto ref = L.forward_raw(V::constant(f), table).value();
  for (std::size_t i = 0; i < n; ++i) {
    auto masked = f;
    std::vector<bool> keep(n, false);
    for (std::size_t k = 0; k < 3; ++k) keep[table.index(i, k)] = true;
    for (std::size_t r = 0; r < n; ++r)
      if (!keep[r])
        for (std::size_t c = 0; c < 4; ++c) masked[r * 4 + c] = 0;
    const auto out = L.forward_raw(V::constant(masked), table).value();
    for (std::size_t c = 0; c < 4; ++c) ASSERT_EQ(out[i * 4 + c], ref[i * 4 + c]);
  }
}

TEST(ContConv, AggregateBackwardAddsOncePerPair) {
  Rng rng(7);
  const std::size_t n = 10, k = 3, c = 2;
  const auto table = neighbors::precompute_table(random_points(rng, n), k);
  auto w = V::constant(nd::Tensor<double>({n * k, c}, 1.0));
  auto f = V::parameter(random_tensor({n, c}, rng));
  nd::backward(nd::sum(neighbor_aggregate(w, f, table)));
  std::vector<double> uses(n, 0.0);
  for (auto idx : table.indices) uses[idx] += 1;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) EXPECT_EQ(f.grad()[r * c + ch], uses[r]);
}

TEST(ContConv, WidthMismatchIsAnError) {
  Rng rng(9);
  const auto table = neighbors::precompute_table(random_points(rng, 6), 2);
  ContConvLayer<double> L(4, 4, rng);
  EXPECT_THROW(L.forward_raw(V::constant(nd::Tensor<double>({6, 2})), table), std::invalid_argument);
  EXPECT_THROW(L.forward_raw(V::constant(nd::Tensor<double>({5, 4})), table), std::invalid_argument);
  EXPECT_THROW(ContConvLayer<double>(3, 4, rng), std::invalid_argument);
}
