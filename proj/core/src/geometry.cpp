#include "fusenet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "fusenet/errors.hpp"

namespace fusenet::geometry {

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("Intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("Intrinsics: image extents must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("Intrinsics: principal point not finite");
}

Intrinsics Intrinsics::cropped(int dx, int dy, int new_width, int new_height) const {
  Intrinsics k = *this;
  k.cx -= dx;
  k.cy -= dy;
  k.width = new_width;
  k.height = new_height;
  return k;
}

Intrinsics Intrinsics::parse(const std::string& text) {
  std::istringstream in(text);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw DataError("Intrinsics: expected 'fx fy cx cy width height'");
  }
  std::string extra;
  if (in >> extra) throw DataError("Intrinsics: trailing content '" + extra + "'");
  k.validate();
  return k;
}

Intrinsics Intrinsics::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open intrinsics file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void Intrinsics::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write intrinsics file " + path.string());
  out.precision(17);
  out << fx << ' ' << fy << ' ' << cx << ' ' << cy << ' ' << width << ' ' << height << '\n';
}

void PointSet::validate() const {
  for (const auto& p : coords) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw DataError("PointSet: non-finite coordinate");
    }
    if (!(p[2] > 0)) throw DataError("PointSet: point behind camera (z <= 0)");
  }
}

DepthImage::DepthImage(int h, int w)
    : height(h),
      width(w),
      values(static_cast<std::size_t>(h) * w, 0.0f),
      mask(static_cast<std::size_t>(h) * w, 0) {}

DepthImage DepthImage::from_values(int h, int w, std::vector<float> vals) {
  DepthImage d(h, w);
  if (vals.size() != d.values.size()) throw DataError("DepthImage: value count does not match extents");
  d.values = std::move(vals);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.values[i] > 0 && std::isfinite(d.values[i])) {
      d.mask[i] = 1;
    } else {
      d.values[i] = 0;
    }
  }
  return d;
}

void DepthImage::set(int u, int v, float depth) {
  if (!(depth > 0) || !std::isfinite(depth)) throw DataError("DepthImage: observed depth must be positive");
  values[index(u, v)] = depth;
  mask[index(u, v)] = 1;
}

void DepthImage::clear(int u, int v) {
  values[index(u, v)] = 0;
  mask[index(u, v)] = 0;
}

std::size_t DepthImage::observed_count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

void DepthImage::validate() const {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (height <= 0 || width <= 0 || values.size() != n || mask.size() != n) {
    throw DataError("DepthImage: inconsistent extents");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      if (!(values[i] > 0) || !std::isfinite(values[i])) {
        throw DataError("DepthImage: observed entry is not strictly positive and finite");
      }
    } else if (values[i] != 0) {
      throw DataError("DepthImage: unobserved entry carries a non-zero value");
    }
  }
}

namespace {

Point3 unproject_one(int u, int v, double z, const Intrinsics& K) {
  return {(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z};
}

void require_matching(const DepthImage& depth, const Intrinsics& K) {
  K.validate();
  if (depth.width != K.width || depth.height != K.height) {
    throw DataError("unproject: depth extents " + std::to_string(depth.width) + "x" +
                    std::to_string(depth.height) + " do not match intrinsics " + std::to_string(K.width) +
                    "x" + std::to_string(K.height));
  }
}

}  // namespace

PointSet unproject(const DepthImage& depth, const Intrinsics& K) {
  require_matching(depth, K);
  PointSet out;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (depth.observed(u, v)) out.coords.push_back(unproject_one(u, v, depth.at(u, v), K));
    }
  }
  if (out.empty()) throw DataError("unproject: depth image has no observed pixels");
  return out;
}

PointSet unproject_pixels(const DepthImage& depth, const Intrinsics& K,
                          std::span<const std::uint32_t> pixel_indices) {
  require_matching(depth, K);
  if (pixel_indices.empty()) throw DataError("unproject: no pixels selected");
  PointSet out;
  out.coords.reserve(pixel_indices.size());
  for (std::uint32_t idx : pixel_indices) {
    if (idx >= depth.values.size() || !depth.mask[idx]) {
      throw DataError("unproject: pixel " + std::to_string(idx) + " is not observed");
    }
    const int u = static_cast<int>(idx % static_cast<std::uint32_t>(depth.width));
    const int v = static_cast<int>(idx / static_cast<std::uint32_t>(depth.width));
    out.coords.push_back(unproject_one(u, v, depth.values[idx], K));
  }
  return out;
}

std::size_t PixelMap::in_bounds_count() const {
  std::size_t n = 0;
  for (auto b : in_bounds) n += b != 0;
  return n;
}

PixelMap PixelMap::concat(std::span<const PixelMap> parts) {
  PixelMap out;
  if (parts.empty()) return out;
  out.height = parts[0].height;
  out.width = parts[0].width;
  for (std::size_t f = 0; f < parts.size(); ++f) {
    const PixelMap& p = parts[f];
    if (p.height != out.height || p.width != out.width) {
      throw std::invalid_argument("PixelMap::concat: grid extents differ across frames");
    }
    out.u.insert(out.u.end(), p.u.begin(), p.u.end());
    out.v.insert(out.v.end(), p.v.begin(), p.v.end());
    out.in_bounds.insert(out.in_bounds.end(), p.in_bounds.begin(), p.in_bounds.end());
    out.batch.insert(out.batch.end(), p.size(), static_cast<int>(f));
  }
  return out;
}

PixelMap project(const PointSet& points, const Intrinsics& K, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("project: scale must be positive");
  K.validate();
  PixelMap out;
  out.width = static_cast<int>(std::floor(K.width * scale));
  out.height = static_cast<int>(std::floor(K.height * scale));
  const std::size_t n = points.size();
  out.u.resize(n);
  out.v.resize(n);
  out.in_bounds.resize(n);
  out.batch.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points.coords[i];
    if (!(p[2] > 0)) throw DataError("project: point " + std::to_string(i) + " has z <= 0");
    const double u_full = std::floor(K.fx * p[0] / p[2] + K.cx + 0.5);
    const double v_full = std::floor(K.fy * p[1] / p[2] + K.cy + 0.5);
    const double u = std::floor(scale * (u_full + 0.5));
    const double v = std::floor(scale * (v_full + 0.5));
    const bool inside = u >= 0 && v >= 0 && u < out.width && v < out.height;
    // Far off-grid coordinates are clamped only to stay representable; the flag carries the meaning.
    out.u[i] = static_cast<int>(std::clamp(u, -1e9, 1e9));
    out.v[i] = static_cast<int>(std::clamp(v, -1e9, 1e9));
    out.in_bounds[i] = inside ? 1 : 0;
  }
  return out;
}

namespace {

struct MapLayout {
  std::size_t batch, channels, height, width;
};

MapLayout map_layout(const nd::Shape& s) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw std::invalid_argument("gather: feature map must be [C,H,W] or [B,C,H,W], got " + nd::shape_str(s));
}

std::size_t map_offset(const MapLayout& L, const PixelMap& px, std::size_t i) {
  return static_cast<std::size_t>(px.batch[i]) * L.channels * L.height * L.width +
         static_cast<std::size_t>(px.v[i]) * L.width + static_cast<std::size_t>(px.u[i]);
}

void check_grid(const MapLayout& L, const PixelMap& px, const char* op) {
  if (static_cast<std::size_t>(px.height) != L.height || static_cast<std::size_t>(px.width) != L.width) {
    throw std::invalid_argument(std::string(op) + ": pixel grid " + std::to_string(px.width) + "x" +
                                std::to_string(px.height) + " does not match feature map " +
                                std::to_string(L.width) + "x" + std::to_string(L.height));
  }
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (px.in_bounds[i] && (px.batch[i] < 0 || static_cast<std::size_t>(px.batch[i]) >= L.batch)) {
      throw std::invalid_argument(std::string(op) + ": point batch index out of range");
    }
  }
}

}  // namespace

template <typename T>
nd::Var<T> gather(const nd::Var<T>& feat, const PixelMap& pixels) {
  const MapLayout L = map_layout(feat.shape());
  check_grid(L, pixels, "gather");
  const std::size_t n = pixels.size(), plane = L.height * L.width;
  nd::Tensor<T> out({n, L.channels});
  const T* f = feat.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!pixels.in_bounds[i]) continue;
    const std::size_t base = map_offset(L, pixels, i);
    for (std::size_t c = 0; c < L.channels; ++c) out[i * L.channels + c] = f[base + c * plane];
  }
  return nd::Var<T>::make_result(std::move(out), {feat}, "gather", [L, pixels](nd::Node<T>& node) {
    T* d = node.parents[0]->grad_buffer().data();
    const std::size_t plane = L.height * L.width;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      if (!pixels.in_bounds[i]) continue;
      const std::size_t base = map_offset(L, pixels, i);
      for (std::size_t c = 0; c < L.channels; ++c) d[base + c * plane] += node.grad[i * L.channels + c];
    }
  });
}

template <typename T>
nd::Var<T> scatter(const nd::Var<T>& point_feats, const PixelMap& pixels, std::size_t batch) {
  const nd::Shape& ps = point_feats.shape();
  if (ps.size() != 2 || ps[0] != pixels.size()) {
    throw std::invalid_argument("scatter: point features " + nd::shape_str(ps) + " do not match " +
                                std::to_string(pixels.size()) + " pixels");
  }
  const MapLayout L{batch, ps[1], static_cast<std::size_t>(pixels.height),
                    static_cast<std::size_t>(pixels.width)};
  check_grid(L, pixels, "scatter");
  const std::size_t plane = L.height * L.width;
  std::vector<T> count(L.batch * plane, T(0));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels.in_bounds[i]) {
      count[static_cast<std::size_t>(pixels.batch[i]) * plane + pixels.v[i] * L.width + pixels.u[i]] += T(1);
    }
  }
  // weight[i] = 1 / (points sharing i's pixel)
  std::vector<T> weight(pixels.size(), T(0));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels.in_bounds[i]) {
      weight[i] = T(1) / count[static_cast<std::size_t>(pixels.batch[i]) * plane + pixels.v[i] * L.width + pixels.u[i]];
    }
  }
  nd::Tensor<T> out({L.batch, L.channels, L.height, L.width});
  const T* f = point_feats.value().data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (!pixels.in_bounds[i]) continue;
    const std::size_t base = map_offset(L, pixels, i);
    for (std::size_t c = 0; c < L.channels; ++c) out[base + c * plane] += weight[i] * f[i * L.channels + c];
  }
  return nd::Var<T>::make_result(
      std::move(out), {point_feats}, "scatter", [L, pixels, weight = std::move(weight)](nd::Node<T>& node) {
        T* d = node.parents[0]->grad_buffer().data();
        const std::size_t plane = L.height * L.width;
        for (std::size_t i = 0; i < pixels.size(); ++i) {
          if (!pixels.in_bounds[i]) continue;
          const std::size_t base = map_offset(L, pixels, i);
          for (std::size_t c = 0; c < L.channels; ++c) {
            d[i * L.channels + c] += weight[i] * node.grad[base + c * plane];
          }
        }
      });
}

template nd::Var<float> gather(const nd::Var<float>&, const PixelMap&);
template nd::Var<double> gather(const nd::Var<double>&, const PixelMap&);
template nd::Var<float> scatter(const nd::Var<float>&, const PixelMap&, std::size_t);
template nd::Var<double> scatter(const nd::Var<double>&, const PixelMap&, std::size_t);

}  // namespace fusenet::geometry
