// Timing report for the neighbor search, continuous convolution and fuse block.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "fusenet/errors.hpp"
#include "fusenet/ops.hpp"

namespace fusenet::cli {

namespace {

struct Measurement {
  std::string name;
  std::string setting;  // e.g. "N=10000 K=9"
  std::size_t items = 0;  // work units per run, for throughput
  std::vector<double> seconds;

  double min() const { return *std::min_element(seconds.begin(), seconds.end()); }
  double median() const {
    auto s = seconds;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  }
};

Measurement time_it(std::string name, std::string setting, std::size_t items, std::size_t repeats,
                    const std::function<void()>& fn) {
  Measurement m{std::move(name), std::move(setting), items, {}};
  fn();  // warm-up
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    m.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return m;
}

/// Road-like cloud: wide in x, shallow in y, deep in z.
geometry::PointSet scene_points(std::size_t n, Rng& rng) {
  geometry::PointSet ps;
  ps.coords.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ps.coords.push_back({uniform(rng, -20, 20), uniform(rng, -2, 2), uniform(rng, 2, 60)});
  }
  return ps;
}

std::string setting(const char* f, auto... args) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

}  // namespace

int cmd_bench(const RunConfig& cfg) {
  const std::size_t n = cfg.count("bench.points");
  const std::size_t k = cfg.count("bench.neighbors");
  const std::size_t c = cfg.count("bench.channels");
  const std::size_t repeats = cfg.count("bench.repeats");
  const int height = static_cast<int>(cfg.integer("bench.height"));
  const int width = static_cast<int>(cfg.integer("bench.width"));
  if (n < 8 || k < 1 || k > n) throw ConfigError("bench: need bench.points >= 8 and 1 <= bench.neighbors <= bench.points");
  if (c < 2 || c % 2) throw ConfigError("bench.channels must be even and at least 2");
  if (repeats < 1) throw ConfigError("bench.repeats must be at least 1");
  const auto out = prepare_output(cfg);

  Rng rng(derive_seed(static_cast<std::uint64_t>(cfg.integer("seed")), 0xBE));
  std::vector<Measurement> results;

  const auto points = scene_points(n, rng);
  results.push_back(time_it("kdtree_build", setting("N=%zu", n), n, repeats,
                            [&] { neighbors::KdTree tree(points); }));

  // Full neighbor tables at growing N: tree search against the exhaustive scan.
  for (std::size_t size : {n / 8, n / 4, n / 2, n}) {
    if (size < k) continue;
    geometry::PointSet sub;
    sub.coords.assign(points.coords.begin(), points.coords.begin() + static_cast<std::ptrdiff_t>(size));
    results.push_back(time_it("knn_table_kdtree", setting("N=%zu K=%zu", size, k), size, repeats,
                              [&] { neighbors::precompute_table(sub, k); }));
    results.push_back(time_it("knn_table_brute", setting("N=%zu K=%zu", size, k), size, repeats,
                              [&] { neighbors::brute_force_table(sub, k); }));
  }

  const auto table = neighbors::precompute_table(points, k);
  contconv::ContConvLayer<float> layer(c, c, rng);
  nd::Tensor<float> feats({n, c});
  for (auto& v : feats.storage()) v = static_cast<float>(uniform(rng, -1, 1));
  const auto cc = setting("N=%zu K=%zu C=%zu", n, k, c);
  results.push_back(time_it("contconv_forward", cc, n, repeats, [&] {
    nd::NoGradGuard guard;
    layer.forward(nd::Var<float>::constant(feats), table);
  }));
  results.push_back(time_it("contconv_forward_backward", cc, n, repeats, [&] {
    auto x = nd::Var<float>::parameter(feats);
    nd::backward(nd::sum(layer.forward(x, table)));
  }));

  dataio::SyntheticSceneConfig sc;
  sc.height = height;
  sc.width = width;
  sc.lidar_line_count = std::max(1, std::min(64, static_cast<int>(0.3 * height) - 1));
  sc.validate();
  const auto frame = dataio::synth_generate(sc);
  const auto geom = model::build_point_geometry({&frame.sparse, 1}, {&frame.intrinsics, 1}, k, n, rng);
  model::FuseBlock<float> block(c, c, model::BranchSet::all(), rng);
  nd::Tensor<float> grid({1, c, static_cast<std::size_t>(height / 2), static_cast<std::size_t>(width / 2)});
  for (auto& v : grid.storage()) v = static_cast<float>(uniform(rng, -1, 1));
  const auto bs = setting("%dx%d points=%zu K=%zu C=%zu", height, width, geom.table.rows, k, c);
  results.push_back(time_it("fuse_block_forward", bs, 1, repeats, [&] {
    nd::NoGradGuard guard;
    block.forward(nd::Var<float>::constant(grid), geom);
  }));
  results.push_back(time_it("fuse_block_forward_backward", bs, 1, repeats, [&] {
    auto x = nd::Var<float>::parameter(grid);
    nd::backward(nd::sum(block.forward(x, geom)));
  }));

  std::printf("%-28s %-36s %12s %12s %14s\n", "benchmark", "setting", "min (ms)", "median (ms)", "items/s (med)");
  nlohmann::json report;
  report["repeats"] = repeats;
  for (const auto& m : results) {
    std::printf("%-28s %-36s %12.3f %12.3f %14.4g\n", m.name.c_str(), m.setting.c_str(), 1e3 * m.min(),
                1e3 * m.median(), m.items / m.median());
    report["results"].push_back({{"name", m.name},
                                 {"setting", m.setting},
                                 {"items", m.items},
                                 {"min_seconds", m.min()},
                                 {"median_seconds", m.median()},
                                 {"seconds", m.seconds}});
  }
  const auto json_path = out / "bench.json";
  std::ofstream js(json_path);
  if (!js || !(js << report.dump(2) << "\n")) throw DataError("cannot write " + json_path.string());
  std::printf("json: %s\n", json_path.c_str());
  return exit_code::kOk;
}

}  // namespace fusenet::cli
