#include "fusenet/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fusenet/contconv.hpp"
#include "fusenet/fusenet.hpp"
#include "fusenet/geometry.hpp"
#include "fusenet/layers.hpp"
#include "fusenet/neighbors.hpp"
#include "fusenet/objective.hpp"
#include "fusenet/ops.hpp"

namespace fusenet::verify {

using nd::Shape;
using nd::Tensor;
using V = nd::Var<double>;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

/// Entries at least `gap` away from zero, either sign.
Tensor<double> away_from_zero(Shape shape, Rng& rng, double gap) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double mag = uniform(rng, gap, 1.0);
    t[i] = (rng() & 1) ? mag : -mag;
  }
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

V param(Tensor<double> t) { return V::parameter(std::move(t)); }

double objective(const V& y, const Tensor<double>& w) {
  double s = 0;
  const Tensor<double>& v = y.value();
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i] * w[i];
  return s;
}

/// Random points in front of a 2W x 2H camera, their table and half-scale cells.
struct PointFixture {
  geometry::PointSet points;
  neighbors::NeighborTable table;
  geometry::PixelMap pixels;
};

PointFixture random_points(Rng& rng, std::size_t n, std::size_t k, int grid_h, int grid_w, bool allow_outside) {
  geometry::Intrinsics K{double(grid_w), double(grid_w), grid_w - 0.5, grid_h - 0.5, 2 * grid_w, 2 * grid_h};
  PointFixture f;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = uniform(rng, 2.0, 6.0);
    const double reach = allow_outside ? 1.3 : 0.95;
    const double u = uniform(rng, -reach, reach) * grid_w;  // offset from cx in full-res pixels
    const double v = uniform(rng, -reach, reach) * grid_h;
    f.points.coords.push_back({u * z / K.fx, v * z / K.fy, z});
  }
  f.table = neighbors::precompute_table(f.points, k);
  f.pixels = geometry::project(f.points, K, 0.5);
  return f;
}

GradcheckCase conv_case(int stride) {
  return {stride == 1 ? "conv2d_s1" : "conv2d_s2", 1e-4, [stride](Rng& rng) {
            const std::size_t b = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
            const std::size_t k = stride == 1 ? (rng() & 1 ? 3 : 1) : 3;
            const std::size_t h = stride * pick(rng, 1, 3), w = stride * pick(rng, 2, 3);
            auto x = param(random_tensor({b, ci, h, w}, rng));
            auto kernel = param(random_tensor({co, ci, k, k}, rng));
            auto bias = param(random_tensor({co}, rng));
            const int pad = static_cast<int>((k - 1) / 2);
            GradcheckInstance inst;
            inst.inputs = {{"x", x}, {"kernel", kernel}, {"bias", bias}};
            inst.forward = [=] { return nd::conv2d(x, kernel, bias, stride, pad); };
            return inst;
          }};
}

GradcheckCase batchnorm_case(const std::string& name, bool training, bool spatial) {
  return {name, 1e-4, [training, spatial](Rng& rng) {
            const std::size_t c = pick(rng, 1, 3);
            Shape s = spatial ? Shape{pick(rng, 1, 2), c, pick(rng, 2, 3), pick(rng, 2, 3)} : Shape{pick(rng, 3, 6), c};
            auto x = param(random_tensor(s, rng, -2.0, 2.0));
            auto gamma = param(random_tensor({c}, rng, 0.5, 1.5));
            auto beta = param(random_tensor({c}, rng));
            auto mean = std::make_shared<Tensor<double>>(random_tensor({c}, rng));
            auto var = std::make_shared<Tensor<double>>(random_tensor({c}, rng, 0.5, 2.0));
            GradcheckInstance inst;
            inst.inputs = {{"x", x}, {"gamma", gamma}, {"beta", beta}};
            inst.forward = [=] { return nd::batchnorm(x, gamma, beta, *mean, *var, training, 0.1, 1e-5); };
            return inst;
          }};
}

GradcheckCase loss_case(const std::string& name, objective::LossKind kind) {
  return {name, 1e-4, [kind](Rng& rng) {
            const std::size_t b = pick(rng, 1, 2), h = pick(rng, 2, 4), w = pick(rng, 2, 4);
            Tensor<double> target = random_tensor({b, 1, h, w}, rng, 1.0, 10.0);
            std::vector<std::uint8_t> mask(target.numel());
            for (auto& m : mask) m = uniform01(rng) < 0.6;
            mask[0] = 1;
            // Errors avoid the smooth-L1 branch point at |e| = 1.
            Tensor<double> pred(target.shape());
            for (std::size_t i = 0; i < pred.numel(); ++i) {
              const double e = (rng() & 1) ? uniform(rng, 0.05, 0.9) : uniform(rng, 1.1, 2.5);
              pred[i] = target[i] + ((rng() & 1) ? e : -e);
            }
            auto p = param(std::move(pred));
            const objective::LossConfig cfg{kind, uniform(rng, 0.5, 2.0)};
            GradcheckInstance inst;
            inst.inputs = {{"pred", p}};
            inst.forward = [=] { return objective::masked_loss(p, target, mask, cfg); };
            return inst;
          }};
}

}  // namespace

GradcheckResult run_case(const GradcheckCase& c, const GradcheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckResult r;
  r.op = c.name;
  r.threshold = c.threshold;
  r.seeds = opt.seeds;
  for (int s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, static_cast<std::uint64_t>(s)));
    GradcheckInstance inst = c.make(rng);
    V y = inst.forward();
    const Tensor<double> w = random_tensor(y.shape(), rng);
    for (auto& [name, v] : inst.inputs) v.zero_grad();
    nd::backward(nd::dot_constant(y, w));

    nd::NoGradGuard no_grad;
    for (auto& [name, v] : inst.inputs) {
      const Tensor<double> analytic = v.grad();
      std::vector<std::size_t> entries(v.numel());
      for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
      if (entries.size() > opt.max_entries) {
        for (std::size_t i = 0; i < opt.max_entries; ++i) {
          std::swap(entries[i], entries[i + uniform_index(rng, entries.size() - i)]);
        }
        entries.resize(opt.max_entries);
      }
      Tensor<double>& value = v.mutable_value();
      for (std::size_t e : entries) {
        const double orig = value[e];
        value[e] = orig + opt.step;
        const double fp = objective(inst.forward(), w);
        value[e] = orig - opt.step;
        const double fm = objective(inst.forward(), w);
        value[e] = orig;
        const double numeric = (fp - fm) / (2 * opt.step);
        const double a = analytic[e];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
        ++r.probes;
        if (rel > r.max_rel_error || std::isnan(rel)) {
          r.max_rel_error = std::isnan(rel) ? INFINITY : rel;
          r.worst_input = name;
        }
      }
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<GradcheckCase> default_cases() {
  std::vector<GradcheckCase> cases;
  cases.push_back(conv_case(1));
  cases.push_back(conv_case(2));
  cases.push_back(batchnorm_case("batchnorm_train_nc", true, false));
  cases.push_back(batchnorm_case("batchnorm_train_nchw", true, true));
  cases.push_back(batchnorm_case("batchnorm_eval", false, true));

  cases.push_back({"relu", 1e-4, [](Rng& rng) {
                     auto x = param(away_from_zero({pick(rng, 1, 2), pick(rng, 1, 3), 3, 3}, rng, 0.05));
                     return GradcheckInstance{{{"x", x}}, [=] { return nd::relu(x); }};
                   }});
  cases.push_back({"upsample2x_bilinear", 1e-4, [](Rng& rng) {
                     auto x = param(random_tensor({pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
                     return GradcheckInstance{{{"x", x}}, [=] { return nd::upsample2x_bilinear(x); }};
                   }});
  cases.push_back({"linear", 1e-4, [](Rng& rng) {
                     const std::size_t m = pick(rng, 1, 5), din = pick(rng, 1, 4), dout = pick(rng, 1, 4);
                     auto x = param(random_tensor({m, din}, rng));
                     auto wt = param(random_tensor({dout, din}, rng));
                     auto b = param(random_tensor({dout}, rng));
                     return GradcheckInstance{{{"x", x}, {"weight", wt}, {"bias", b}}, [=] { return nd::linear(x, wt, b); }};
                   }});
  cases.push_back({"add", 1e-4, [](Rng& rng) {
                     Shape s{pick(rng, 1, 2), pick(rng, 1, 3), 2, 3};
                     auto a = param(random_tensor(s, rng));
                     auto b = param(random_tensor(s, rng));
                     return GradcheckInstance{{{"a", a}, {"b", b}}, [=] { return nd::add(a, b); }};
                   }});
  cases.push_back({"concat_channels", 1e-4, [](Rng& rng) {
                     const std::size_t b = pick(rng, 1, 2);
                     auto x = param(random_tensor({b, pick(rng, 1, 3), 2, 3}, rng));
                     auto y = param(random_tensor({b, pick(rng, 1, 3), 2, 3}, rng));
                     return GradcheckInstance{{{"a", x}, {"b", y}}, [=] { return nd::concat_channels(x, y); }};
                   }});
  cases.push_back({"mul", 1e-4, [](Rng& rng) {
                     Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
                     auto a = param(random_tensor(s, rng));
                     auto b = param(random_tensor(s, rng));
                     return GradcheckInstance{{{"a", a}, {"b", b}}, [=] { return nd::mul(a, b); }};
                   }});
  cases.push_back({"gather", 1e-4, [](Rng& rng) {
                     const auto pts = random_points(rng, pick(rng, 4, 12), 1, 4, 6, true);
                     auto feat = param(random_tensor({1, pick(rng, 1, 3), 4, 6}, rng));
                     return GradcheckInstance{{{"feat", feat}}, [=] { return geometry::gather(feat, pts.pixels); }};
                   }});
  cases.push_back({"scatter", 1e-4, [](Rng& rng) {
                     // A 2x3 grid with up to 12 points forces collisions.
                     const auto pts = random_points(rng, pick(rng, 4, 12), 1, 2, 3, true);
                     auto f = param(random_tensor({pts.points.size(), pick(rng, 1, 3)}, rng));
                     return GradcheckInstance{{{"point_feats", f}}, [=] { return geometry::scatter(f, pts.pixels, 1); }};
                   }});
  cases.push_back({"neighbor_aggregate", 1e-4, [](Rng& rng) {
                     const std::size_t n = pick(rng, 3, 10), k = pick(rng, 1, 3), c = pick(rng, 1, 4);
                     const auto pts = random_points(rng, n, k, 4, 4, false);
                     auto wts = param(random_tensor({n * k, c}, rng));
                     auto f = param(random_tensor({n, c}, rng));
                     return GradcheckInstance{{{"weights", wts}, {"features", f}},
                                              [=] { return contconv::neighbor_aggregate(wts, f, pts.table); }};
                   }});
  for (bool full : {false, true}) {
    cases.push_back({full ? "contconv" : "contconv_raw", 1e-4, [full](Rng& rng) {
                       const std::size_t n = pick(rng, 4, 10), k = pick(rng, 1, 4);
                       const std::size_t cin = 2 * pick(rng, 1, 3), cout = 2 * pick(rng, 1, 3);
                       const auto pts = random_points(rng, n, k, 4, 4, false);
                       auto layer = std::make_shared<contconv::ContConvLayer<double>>(cin, cout, rng);
                       auto f = param(random_tensor({n, cin}, rng));
                       nd::ParamSet<double> ps;
                       layer->collect("layer", ps);
                       GradcheckInstance inst;
                       inst.inputs.push_back({"features", f});
                       for (auto& p : ps.params) inst.inputs.push_back({p.name, p.var});
                       inst.forward = [=] { return full ? layer->forward(f, pts.table) : layer->forward_raw(f, pts.table); };
                       return inst;
                     }});
  }
  cases.push_back(loss_case("loss_l2", objective::LossKind::L2));
  cases.push_back(loss_case("loss_smooth_l1", objective::LossKind::SmoothL1));
  cases.push_back(loss_case("loss_combined", objective::LossKind::Combined));

  cases.push_back({"fuse_block", 1e-3, [](Rng& rng) {
                     const std::size_t c = 4;
                     model::PointGeometry geom;
                     auto pts = random_points(rng, 12, 3, 8, 8, true);
                     geom.table = std::move(pts.table);
                     geom.pixels = std::move(pts.pixels);
                     geom.batch = 1;
                     auto block = std::make_shared<model::FuseBlock<double>>(c, c, model::BranchSet::all(), rng);
                     auto x = param(random_tensor({1, c, 8, 8}, rng));
                     nd::ParamSet<double> ps;
                     block->collect("block", ps);
                     GradcheckInstance inst;
                     inst.inputs.push_back({"x", x});
                     for (auto& p : ps.params) inst.inputs.push_back({p.name, p.var});
                     auto g = std::make_shared<model::PointGeometry>(std::move(geom));
                     inst.forward = [=] { return block->forward(x, *g); };
                     return inst;
                   }});
  return cases;
}

std::vector<GradcheckResult> run_cases(const std::vector<GradcheckCase>& cases, const GradcheckOptions& opt) {
  std::vector<GradcheckResult> out;
  for (const auto& c : cases) out.push_back(run_case(c, opt));
  return out;
}

std::string format_results(const std::vector<GradcheckResult>& results) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-22s %14s %10s %6s %7s %8s  %s\n", "op", "max_rel_err", "threshold", "seeds",
                "probes", "seconds", "status");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-22s %14.3e %10.0e %6d %7zu %8.2f  %s%s%s\n", r.op.c_str(), r.max_rel_error,
                  r.threshold, r.seeds, r.probes, r.seconds, r.passed() ? "PASS" : "FAIL",
                  r.passed() ? "" : " worst input: ", r.passed() ? "" : r.worst_input.c_str());
    out += line;
  }
  return out;
}

}  // namespace fusenet::verify
