#include "fusenet/fusenet.hpp"

#include <sstream>

#include "fusenet/errors.hpp"
#include "fusenet/ops.hpp"

namespace fusenet::model {

BranchSet BranchSet::parse(const std::string& text) {
  BranchSet b{false, false, false};
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "s1") {
      b.stride1 = true;
    } else if (item == "s2") {
      b.stride2 = true;
    } else if (item == "cont") {
      b.continuous = true;
    } else if (!item.empty()) {
      throw ConfigError("unknown branch '" + item + "' (expected s1, s2, cont)");
    }
  }
  if (!b.any()) throw ConfigError("branch set must name at least one of s1, s2, cont");
  return b;
}

std::string BranchSet::str() const {
  std::string out;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  put(stride1, "s1");
  put(stride2, "s2");
  put(continuous, "cont");
  return out;
}

void FuseNetConfig::validate() const {
  if (channels == 0 || channels % 2 != 0) throw ConfigError("channels (C) must be even and positive");
  if (blocks < 1) throw ConfigError("blocks (N) must be at least 1");
  if (neighbors < 1) throw ConfigError("neighbors (K) must be at least 1");
  if (sample_points < 1) throw ConfigError("sample_points must be at least 1");
  if (!(gamma >= 0)) throw ConfigError("gamma must be non-negative");
  if (!branches.any()) throw ConfigError("at least one block branch is required");
}

PointGeometry build_point_geometry(std::span<const geometry::DepthImage> sparse,
                                   std::span<const geometry::Intrinsics> intrinsics, std::size_t neighbors,
                                   std::size_t sample_budget, Rng& rng, double scale) {
  if (sparse.size() != intrinsics.size()) {
    throw std::invalid_argument("build_point_geometry: one intrinsics record per frame required");
  }
  std::vector<neighbors::NeighborTable> tables;
  std::vector<geometry::PixelMap> maps;
  for (std::size_t f = 0; f < sparse.size(); ++f) {
    const auto picked = dataio::sample_points(sparse[f], sample_budget, rng);
    const auto points = geometry::unproject_pixels(sparse[f], intrinsics[f], picked);
    if (points.size() < neighbors) {
      throw DataError("frame " + std::to_string(f) + " has " + std::to_string(points.size()) +
                      " observed points, fewer than K=" + std::to_string(neighbors));
    }
    tables.push_back(neighbors::precompute_table(points, neighbors));
    maps.push_back(geometry::project(points, intrinsics[f], scale));
  }
  PointGeometry g;
  g.table = neighbors::NeighborTable::concat(tables);
  g.pixels = geometry::PixelMap::concat(maps);
  g.batch = sparse.size();
  return g;
}

template <typename T>
FuseBlock<T>::FuseBlock(std::size_t in_channels, std::size_t channels, BranchSet branches, Rng& rng)
    : in_channels_(in_channels), channels_(channels), branches_(branches) {
  if (!branches.any()) throw ConfigError("FuseBlock: empty branch set");
  if (branches.stride1) stride1 = std::make_unique<nd::ConvBnRelu<T>>(in_channels, channels, 1, rng);
  if (branches.stride2) {
    stride2_down = std::make_unique<nd::ConvBnRelu<T>>(in_channels, channels, 2, rng);
    stride2_conv = std::make_unique<nd::ConvBnRelu<T>>(channels, channels, 1, rng);
  }
  if (branches.continuous) {
    cont1 = std::make_unique<contconv::ContConvLayer<T>>(in_channels, channels, rng);
    cont2 = std::make_unique<contconv::ContConvLayer<T>>(channels, channels, rng);
  }
  fuse = std::make_unique<nd::ConvBnRelu<T>>(channels, channels, 1, rng);
}

template <typename T>
nd::Var<T> FuseBlock<T>::point_branch(const nd::Var<T>& x, const PointGeometry& geom) {
  if (geom.empty()) throw std::invalid_argument("FuseBlock: continuous branch needs point geometry");
  if (x.shape()[0] != geom.batch) {
    throw std::invalid_argument("FuseBlock: feature batch " + std::to_string(x.shape()[0]) +
                                " does not match point geometry batch " + std::to_string(geom.batch));
  }
  auto f = geometry::gather(x, geom.pixels);
  f = cont1->forward(f, geom.table);
  f = cont2->forward(f, geom.table);
  return geometry::scatter(f, geom.pixels, geom.batch);
}

template <typename T>
nd::Var<T> FuseBlock<T>::forward(const nd::Var<T>& x, const PointGeometry& geom) {
  if (x.shape().size() != 4 || x.shape()[1] != in_channels_) {
    throw std::invalid_argument("FuseBlock: expected " + std::to_string(in_channels_) + " input channels, got " +
                                nd::shape_str(x.shape()));
  }
  nd::Var<T> sum;
  auto accumulate = [&sum](nd::Var<T> v) { sum = sum ? nd::add(sum, v) : std::move(v); };
  if (stride1) accumulate(stride1->forward(x));
  if (stride2_down) accumulate(nd::upsample2x_bilinear(stride2_conv->forward(stride2_down->forward(x))));
  if (cont1) accumulate(point_branch(x, geom));
  auto out = fuse->forward(sum);
  if (has_shortcut()) out = nd::add(out, x);
  return out;
}

template <typename T>
void FuseBlock<T>::collect(const std::string& prefix, nd::ParamSet<T>& out) {
  if (stride1) stride1->collect(prefix + ".stride1", out);
  if (stride2_down) {
    stride2_down->collect(prefix + ".stride2_down", out);
    stride2_conv->collect(prefix + ".stride2_conv", out);
  }
  if (cont1) {
    cont1->collect(prefix + ".cont1", out);
    cont2->collect(prefix + ".cont2", out);
  }
  fuse->collect(prefix + ".fuse", out);
}

template <typename T>
FuseNet<T>::FuseNet(const FuseNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  depth_stem1_ = std::make_unique<nd::ConvBnRelu<T>>(1, kDepthStemWidth, 2, rng);
  depth_stem2_ = std::make_unique<nd::ConvBnRelu<T>>(kDepthStemWidth, kDepthStemWidth, 1, rng);
  rgbd_stem1_ = std::make_unique<nd::ConvBnRelu<T>>(4, kRgbdStemWidth, 2, rng);
  rgbd_stem2_ = std::make_unique<nd::ConvBnRelu<T>>(kRgbdStemWidth, kRgbdStemWidth, 1, rng);
  std::size_t in = kDepthStemWidth + kRgbdStemWidth;
  for (std::size_t i = 0; i < cfg_.blocks; ++i) {
    blocks_.push_back(std::make_unique<FuseBlock<T>>(in, cfg_.channels, cfg_.branches, rng));
    in = cfg_.channels;
  }
  head_conv_ = std::make_unique<nd::ConvBnRelu<T>>(cfg_.channels, cfg_.channels, 1, rng);
  head_out_ = std::make_unique<nd::Conv2dLayer<T>>(cfg_.channels, 1, 3, 1, true, rng);
}

template <typename T>
nd::Var<T> FuseNet<T>::stems(const nd::Var<T>& rgb, const nd::Var<T>& depth) {
  const nd::Shape& rs = rgb.shape();
  const nd::Shape& ds = depth.shape();
  if (rs.size() != 4 || rs[1] != 3) throw std::invalid_argument("FuseNet: rgb must be [B,3,H,W], got " + nd::shape_str(rs));
  if (ds.size() != 4 || ds[1] != 1 || ds[0] != rs[0] || ds[2] != rs[2] || ds[3] != rs[3]) {
    throw std::invalid_argument("FuseNet: depth must be [B,1,H,W] matching rgb, got " + nd::shape_str(ds));
  }
  if (rs[2] % 4 != 0 || rs[3] % 4 != 0) {
    throw std::invalid_argument("FuseNet: image extents " + std::to_string(rs[3]) + "x" + std::to_string(rs[2]) +
                                " must be multiples of 4");
  }
  auto d = depth_stem2_->forward(depth_stem1_->forward(depth));
  auto r = rgbd_stem2_->forward(rgbd_stem1_->forward(nd::concat_channels(rgb, depth)));
  return nd::concat_channels(d, r);
}

template <typename T>
nd::Var<T> FuseNet<T>::forward(const nd::Var<T>& rgb, const nd::Var<T>& depth, const PointGeometry& geom) {
  auto x = stems(rgb, depth);
  for (auto& b : blocks_) x = b->forward(x, geom);
  x = head_conv_->forward(nd::upsample2x_bilinear(x));
  return head_out_->forward(x);
}

template <typename T>
nd::Var<T> FuseNet<T>::predict(std::span<const dataio::Frame> frames, Rng& rng) {
  if (frames.empty()) throw std::invalid_argument("FuseNet::predict: empty batch");
  PointGeometry geom;
  if (needs_points()) {
    std::vector<geometry::DepthImage> sparse;
    std::vector<geometry::Intrinsics> intr;
    for (const auto& f : frames) {
      sparse.push_back(f.sparse);
      intr.push_back(f.intrinsics);
    }
    geom = build_point_geometry(sparse, intr, cfg_.neighbors, cfg_.sample_points, rng);
  } else {
    for (const auto& f : frames) {
      if (f.sparse.observed_count() == 0) throw DataError("frame " + f.id + ": sparse depth is empty");
    }
  }
  const auto rgb = nd::Var<T>::constant(rgb_tensor<T>(frames));
  const auto depth = nd::Var<T>::constant(depth_tensor<T>(frames));
  return forward(rgb, depth, geom);
}

template <typename T>
nd::ParamSet<T> FuseNet<T>::params() {
  nd::ParamSet<T> ps;
  depth_stem1_->collect("stem_depth.0", ps);
  depth_stem2_->collect("stem_depth.1", ps);
  rgbd_stem1_->collect("stem_rgbd.0", ps);
  rgbd_stem2_->collect("stem_rgbd.1", ps);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i]->collect("blocks." + std::to_string(i), ps);
  head_conv_->collect("head.0", ps);
  head_out_->collect("head.1", ps);
  return ps;
}

template <typename T>
void FuseNet<T>::set_training(bool on) {
  params().set_training(on);
}

template <typename T>
std::size_t FuseNet<T>::param_count() {
  return params().scalar_count();
}

std::size_t param_count(const FuseNetConfig& cfg) {
  FuseNet<float> net(cfg, 0);
  return net.param_count();
}

template <typename T>
std::unique_ptr<FuseNet<T>> ablate(FuseNetConfig cfg, BranchSet branches, std::uint64_t seed) {
  if (!branches.any()) throw ConfigError("ablate: branch subset must be non-empty");
  cfg.branches = branches;
  return std::make_unique<FuseNet<T>>(cfg, seed);
}

template <typename T>
nd::Tensor<T> rgb_tensor(std::span<const dataio::Frame> frames) {
  const auto h = static_cast<std::size_t>(frames[0].rgb.height);
  const auto w = static_cast<std::size_t>(frames[0].rgb.width);
  nd::Tensor<T> t({frames.size(), 3, h, w});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const auto& img = frames[b].rgb;
    if (static_cast<std::size_t>(img.height) != h || static_cast<std::size_t>(img.width) != w) {
      throw std::invalid_argument("rgb_tensor: frames in a batch must share extents");
    }
    for (std::size_t v = 0; v < h; ++v) {
      for (std::size_t u = 0; u < w; ++u) {
        const std::uint8_t* px = img.at(static_cast<int>(u), static_cast<int>(v));
        for (std::size_t c = 0; c < 3; ++c) t.at(b, c, v, u) = static_cast<T>(px[c]) / T(255);
      }
    }
  }
  return t;
}

template <typename T>
nd::Tensor<T> depth_tensor(std::span<const dataio::Frame> frames) {
  const auto h = static_cast<std::size_t>(frames[0].sparse.height);
  const auto w = static_cast<std::size_t>(frames[0].sparse.width);
  nd::Tensor<T> t({frames.size(), 1, h, w});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const auto& d = frames[b].sparse;
    if (static_cast<std::size_t>(d.height) != h || static_cast<std::size_t>(d.width) != w) {
      throw std::invalid_argument("depth_tensor: frames in a batch must share extents");
    }
    for (std::size_t i = 0; i < h * w; ++i) t[b * h * w + i] = static_cast<T>(d.values[i]);
  }
  return t;
}

template class FuseBlock<float>;
template class FuseBlock<double>;
template class FuseNet<float>;
template class FuseNet<double>;
template std::unique_ptr<FuseNet<float>> ablate<float>(FuseNetConfig, BranchSet, std::uint64_t);
template std::unique_ptr<FuseNet<double>> ablate<double>(FuseNetConfig, BranchSet, std::uint64_t);
template nd::Tensor<float> rgb_tensor<float>(std::span<const dataio::Frame>);
template nd::Tensor<double> rgb_tensor<double>(std::span<const dataio::Frame>);
template nd::Tensor<float> depth_tensor<float>(std::span<const dataio::Frame>);
template nd::Tensor<double> depth_tensor<double>(std::span<const dataio::Frame>);

}  // namespace fusenet::model
