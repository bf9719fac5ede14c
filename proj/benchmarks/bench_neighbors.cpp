#include <benchmark/benchmark.h>

#include "fusenet/neighbors.hpp"
#include "fusenet/rng.hpp"

namespace {

using namespace fusenet;

geometry::PointSet cloud(std::size_t n) {
  Rng rng(1);
  geometry::PointSet ps;
  for (std::size_t i = 0; i < n; ++i) ps.coords.push_back({uniform(rng, -20, 20), uniform(rng, -2, 2), uniform(rng, 2, 60)});
  return ps;
}

void BM_KdTreeBuild(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    neighbors::KdTree tree(pts);
    benchmark::DoNotOptimize(tree.node_count());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdTreeBuild)->RangeMultiplier(4)->Range(1 << 10, 1 << 14)->Unit(benchmark::kMillisecond);

void BM_TableKdTree(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(neighbors::precompute_table(pts, static_cast<std::size_t>(state.range(1))));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TableKdTree)
    ->ArgsProduct({{1000, 2500, 5000, 10000}, {9}})
    ->Complexity(benchmark::oNLogN)
    ->Unit(benchmark::kMillisecond);

void BM_TableBruteForce(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(neighbors::brute_force_table(pts, static_cast<std::size_t>(state.range(1))));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TableBruteForce)
    ->ArgsProduct({{1000, 2500, 5000, 10000}, {9}})
    ->Complexity(benchmark::oNSquared)
    ->Unit(benchmark::kMillisecond);

void BM_QueryK(benchmark::State& state) {
  const auto pts = cloud(10000);
  const neighbors::KdTree tree(pts);
  const auto k = static_cast<std::size_t>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.query(pts.coords[i], k));
    i = (i + 7919) % pts.size();
  }
}
BENCHMARK(BM_QueryK)->Arg(1)->Arg(3)->Arg(9)->Arg(15);

}  // namespace
