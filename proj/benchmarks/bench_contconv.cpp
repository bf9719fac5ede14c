#include <benchmark/benchmark.h>

#include "fusenet/contconv.hpp"
#include "fusenet/fusenet.hpp"
#include "fusenet/ops.hpp"

namespace {

using namespace fusenet;
using V = nd::Var<float>;

struct ContConvFixture {
  neighbors::NeighborTable table;
  nd::Tensor<float> feats;
  std::unique_ptr<contconv::ContConvLayer<float>> layer;

  ContConvFixture(std::size_t n, std::size_t k, std::size_t c) {
    Rng rng(2);
    geometry::PointSet ps;
    for (std::size_t i = 0; i < n; ++i) ps.coords.push_back({uniform(rng, -20, 20), uniform(rng, -2, 2), uniform(rng, 2, 60)});
    table = neighbors::precompute_table(ps, k);
    feats = nd::Tensor<float>({n, c});
    for (auto& v : feats.storage()) v = static_cast<float>(uniform(rng, -1, 1));
    layer = std::make_unique<contconv::ContConvLayer<float>>(c, c, rng);
  }
};

// Args: points, K, channels.
void BM_ContConvForward(benchmark::State& state) {
  ContConvFixture f(state.range(0), state.range(1), state.range(2));
  nd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(f.layer->forward(V::constant(f.feats), f.table));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ContConvForward)
    ->ArgsProduct({{10000}, {3, 9, 15}, {16, 32}})
    ->Unit(benchmark::kMillisecond);

void BM_ContConvForwardBackward(benchmark::State& state) {
  ContConvFixture f(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) {
    auto x = V::parameter(f.feats);
    nd::backward(nd::sum(f.layer->forward(x, f.table)));
    benchmark::DoNotOptimize(x.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ContConvForwardBackward)
    ->ArgsProduct({{10000}, {3, 9, 15}, {16, 32}})
    ->Unit(benchmark::kMillisecond);

// Args: channels. One 64x192 synthetic frame, K=9.
void BM_FuseBlockForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  dataio::SyntheticSceneConfig sc;
  const auto frame = dataio::synth_generate(sc);
  Rng rng(3);
  const auto geom = model::build_point_geometry({&frame.sparse, 1}, {&frame.intrinsics, 1}, 9, 10000, rng);
  model::FuseBlock<float> block(c, c, model::BranchSet::all(), rng);
  nd::Tensor<float> x({1, c, static_cast<std::size_t>(sc.height / 2), static_cast<std::size_t>(sc.width / 2)});
  for (auto& v : x.storage()) v = static_cast<float>(uniform(rng, -1, 1));
  nd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(V::constant(x), geom));
}
BENCHMARK(BM_FuseBlockForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
