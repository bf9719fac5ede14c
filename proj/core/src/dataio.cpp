#include "fusenet/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fusenet/errors.hpp"

namespace fusenet::dataio {

namespace {

// RAII over libpng's simplified image API, which reports errors through
// image.message instead of longjmp.
class PngImage {
 public:
  PngImage() {
    image_ = {};
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }
  png_image& operator*() { return image_; }

 private:
  png_image image_;
};

std::string png_error(const std::filesystem::path& path, const png_image& img) {
  return path.string() + ": " + (img.message[0] ? img.message : "PNG error");
}

}  // namespace

std::uint16_t encode_depth(float meters) {
  if (!(meters > 0)) return 0;
  const double stored = std::floor(static_cast<double>(meters) * 256.0 + 0.5);
  return static_cast<std::uint16_t>(std::clamp(stored, 1.0, 65535.0));
}

DepthImage load_depth_png(const std::filesystem::path& path) {
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.string().c_str())) {
    throw DataError(png_error(path, *img));
  }
  if ((*img).format != PNG_FORMAT_LINEAR_Y) {
    throw DataError(path.string() + ": depth PNG must be 16-bit single-channel");
  }
  const int w = static_cast<int>((*img).width), h = static_cast<int>((*img).height);
  std::vector<std::uint16_t> raw(static_cast<std::size_t>(w) * h);
  if (!png_image_finish_read(img.get(), nullptr, raw.data(), 0, nullptr)) {
    throw DataError(png_error(path, *img));
  }
  DepthImage d(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != 0) {
      d.values[i] = static_cast<float>(raw[i] / 256.0);
      d.mask[i] = 1;
    }
  }
  return d;
}

void save_depth_png(const DepthImage& depth, const std::filesystem::path& path) {
  std::vector<std::uint16_t> raw(depth.values.size(), 0);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = depth.mask[i] ? encode_depth(depth.values[i]) : 0;
  PngImage img;
  (*img).width = static_cast<png_uint_32>(depth.width);
  (*img).height = static_cast<png_uint_32>(depth.height);
  (*img).format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(img.get(), path.string().c_str(), 0, raw.data(), 0, nullptr)) {
    throw DataError(png_error(path, *img));
  }
}

RgbImage load_rgb_png(const std::filesystem::path& path) {
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.string().c_str())) {
    throw DataError(png_error(path, *img));
  }
  const auto fmt = (*img).format;
  if ((fmt & PNG_FORMAT_FLAG_LINEAR) || !(fmt & PNG_FORMAT_FLAG_COLOR)) {
    throw DataError(path.string() + ": RGB PNG must be 8-bit color");
  }
  (*img).format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>((*img).height), static_cast<int>((*img).width));
  if (!png_image_finish_read(img.get(), nullptr, out.pixels.data(), 0, nullptr)) {
    throw DataError(png_error(path, *img));
  }
  return out;
}

void save_rgb_png(const RgbImage& image, const std::filesystem::path& path) {
  PngImage img;
  (*img).width = static_cast<png_uint_32>(image.width);
  (*img).height = static_cast<png_uint_32>(image.height);
  (*img).format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(img.get(), path.string().c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError(png_error(path, *img));
  }
}

void Frame::validate() const {
  sparse.validate();
  intrinsics.validate();
  if (rgb.height != sparse.height || rgb.width != sparse.width) {
    throw DataError("frame " + id + ": RGB and sparse depth extents differ");
  }
  if (gt && (gt->height != sparse.height || gt->width != sparse.width)) {
    throw DataError("frame " + id + ": ground truth and sparse depth extents differ");
  }
  if (gt) gt->validate();
  if (intrinsics.width != sparse.width || intrinsics.height != sparse.height) {
    throw DataError("frame " + id + ": intrinsics extents do not match images");
  }
}

namespace {

DepthImage crop_depth(const DepthImage& d, int x0, int y0, int h, int w) {
  DepthImage out(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t src = d.index(u + x0, v + y0);
      out.values[out.index(u, v)] = d.values[src];
      out.mask[out.index(u, v)] = d.mask[src];
    }
  }
  return out;
}

}  // namespace

Frame crop(const Frame& frame, int x0, int y0, int h, int w) {
  if (h <= 0 || w <= 0 || x0 < 0 || y0 < 0 || x0 + w > frame.width() || y0 + h > frame.height()) {
    throw DataError("crop: window " + std::to_string(w) + "x" + std::to_string(h) + "+" +
                    std::to_string(x0) + "+" + std::to_string(y0) + " exceeds frame " +
                    std::to_string(frame.width()) + "x" + std::to_string(frame.height()));
  }
  Frame out;
  out.id = frame.id;
  out.sparse = crop_depth(frame.sparse, x0, y0, h, w);
  if (frame.gt) out.gt = crop_depth(*frame.gt, x0, y0, h, w);
  out.rgb = RgbImage(h, w);
  for (int v = 0; v < h; ++v) {
    std::copy_n(frame.rgb.at(x0, y0 + v), static_cast<std::size_t>(w) * 3, out.rgb.at(0, v));
  }
  out.intrinsics = frame.intrinsics.cropped(x0, y0, w, h);
  return out;
}

Frame random_crop(const Frame& frame, int h, int w, Rng& rng) {
  if (h > frame.height() || w > frame.width()) {
    throw DataError("random_crop: crop " + std::to_string(w) + "x" + std::to_string(h) +
                    " larger than frame " + std::to_string(frame.width()) + "x" +
                    std::to_string(frame.height()));
  }
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(frame.width() - w + 1)));
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(frame.height() - h + 1)));
  return crop(frame, x0, y0, h, w);
}

std::vector<std::uint32_t> sample_points(const DepthImage& depth, std::size_t budget, Rng& rng) {
  if (budget < 1) throw std::invalid_argument("sample_points: budget must be at least 1");
  std::vector<std::uint32_t> observed;
  for (std::size_t i = 0; i < depth.mask.size(); ++i) {
    if (depth.mask[i]) observed.push_back(static_cast<std::uint32_t>(i));
  }
  if (observed.empty()) throw DataError("sample_points: depth image has no observed pixels");
  if (observed.size() <= budget) return observed;
  // Partial Fisher-Yates: the first `budget` slots become a uniform subset.
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + uniform_index(rng, observed.size() - i);
    std::swap(observed[i], observed[j]);
  }
  observed.resize(budget);
  std::sort(observed.begin(), observed.end());
  return observed;
}

void SyntheticSceneConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("synthetic scene: extents must be positive");
  if (!(depth_min > 0) || !(depth_max > depth_min)) {
    throw ConfigError("synthetic scene: need 0 < depth_min < depth_max (objects must be in front of the camera)");
  }
  if (!(camera_height > 0)) throw ConfigError("synthetic scene: camera_height must be positive");
  if (plane_count < 1 || plane_count > 2) throw ConfigError("synthetic scene: plane_count must be 1 or 2");
  if (box_count < 0) throw ConfigError("synthetic scene: box_count must be non-negative");
  if (lidar_line_count < 1 || lidar_line_count * 10 >= height * 3) {
    throw ConfigError("synthetic scene: lidar_line_count must be in [1, 0.3 * height)");
  }
  if (noise_sigma < 0) throw ConfigError("synthetic scene: noise_sigma must be non-negative");
}

Intrinsics SyntheticSceneConfig::intrinsics() const {
  Intrinsics k;
  k.fx = k.fy = 0.5 * width;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.35 * height;
  k.width = width;
  k.height = height;
  return k;
}

namespace {

struct Box {
  double lo[3];
  double hi[3];
  double albedo[3];
};

struct Hit {
  double z = 0;      // depth along the optical axis (ray has unit z component)
  int normal_axis = -1;
  double normal_sign = 0;
  int object = -1;   // -1 ground, -2 wall, >= 0 box
};

// Slab test for a ray from the origin with direction (dx, dy, 1).
bool hit_box(const Box& b, const double d[3], Hit& hit) {
  double t_near = 0, t_far = 1e300;
  int axis_near = -1;
  double sign_near = 0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (b.lo[a] > 0 || b.hi[a] < 0) return false;
      continue;
    }
    double t0 = b.lo[a] / d[a], t1 = b.hi[a] / d[a];
    double s = -1;  // entering through the low face
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis_near = a;
      sign_near = s;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return false;
  }
  if (axis_near < 0 || !(t_near > 0)) return false;
  hit.z = t_near;
  hit.normal_axis = axis_near;
  hit.normal_sign = sign_near;
  return true;
}

std::uint8_t shade(double albedo, double light) {
  const double v = std::floor(255.0 * albedo * light + 0.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

Frame synth_generate(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Intrinsics K = cfg.intrinsics();

  std::vector<Box> boxes;
  const double span = cfg.depth_max - cfg.depth_min;
  for (int i = 0; i < cfg.box_count; ++i) {
    Box b{};
    const double z0 = uniform(rng, cfg.depth_min + 0.1 * span, cfg.depth_min + 0.6 * span);
    const double depth = uniform(rng, 1.0, 4.0);
    const double width = uniform(rng, 1.0, 4.0);
    const double height = uniform(rng, 1.0, 3.0);
    // Lateral placement scaled with distance so boxes stay in view.
    const double x_half = 0.8 * z0 * (0.5 * cfg.width) / K.fx;
    const double xc = uniform(rng, -x_half, x_half);
    b.lo[0] = xc - 0.5 * width;
    b.hi[0] = xc + 0.5 * width;
    b.lo[1] = cfg.camera_height - height;
    b.hi[1] = cfg.camera_height;
    b.lo[2] = z0;
    b.hi[2] = z0 + depth;
    for (double& c : b.albedo) c = uniform(rng, 0.3, 1.0);
    boxes.push_back(b);
  }

  Frame f;
  f.id = "synthetic-" + std::to_string(cfg.seed);
  f.intrinsics = K;
  f.rgb = RgbImage(cfg.height, cfg.width);
  DepthImage gt(cfg.height, cfg.width);
  // Unit light direction; exact in binary up to rounding of the literals.
  const double light[3] = {-0.48, -0.64, -0.6};

  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const double d[3] = {(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0};
      Hit best;
      if (d[1] > 0) {
        const double z = cfg.camera_height / d[1];
        if (z <= cfg.depth_max) best = Hit{z, 1, -1.0, -1};
      }
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        Hit h;
        if (hit_box(boxes[i], d, h) && (best.normal_axis < 0 || h.z < best.z)) {
          h.object = static_cast<int>(i);
          best = h;
        }
      }
      if (best.normal_axis < 0 && cfg.plane_count >= 2) best = Hit{cfg.depth_max, 2, -1.0, -2};
      if (best.normal_axis < 0) continue;
      if (!(best.z >= cfg.depth_min * 0.5)) {
        throw DataError("synthetic scene: geometry too close to the camera");
      }
      gt.set(u, v, static_cast<float>(best.z));

      double albedo[3];
      if (best.object >= 0) {
        std::copy_n(boxes[static_cast<std::size_t>(best.object)].albedo, 3, albedo);
      } else if (best.object == -1) {
        const double x = d[0] * best.z;
        const long cell = static_cast<long>(std::floor(x / 2.0)) + static_cast<long>(std::floor(best.z / 2.0));
        const double g = (cell & 1) ? 0.55 : 0.4;
        albedo[0] = g;
        albedo[1] = g;
        albedo[2] = g * 0.9;
      } else {
        albedo[0] = 0.5;
        albedo[1] = 0.7;
        albedo[2] = 0.9;
      }
      const double ndotl = best.normal_sign * light[best.normal_axis];
      const double lit = 0.3 + 0.7 * std::max(0.0, ndotl);
      std::uint8_t* px = f.rgb.at(u, v);
      for (int c = 0; c < 3; ++c) px[c] = shade(albedo[c], lit);
    }
  }

  DepthImage sparse(cfg.height, cfg.width);
  for (int line = 0; line < cfg.lidar_line_count; ++line) {
    const int v = static_cast<int>((2L * line + 1) * cfg.height / (2L * cfg.lidar_line_count));
    for (int u = 0; u < cfg.width; ++u) {
      if (!gt.observed(u, v)) continue;
      double z = gt.at(u, v);
      if (cfg.noise_sigma > 0) z = std::max(0.01, z + cfg.noise_sigma * approx_normal(rng));
      sparse.set(u, v, static_cast<float>(z));
    }
  }
  f.sparse = std::move(sparse);
  f.gt = std::move(gt);
  return f;
}

std::vector<Frame> load_dataset(const std::filesystem::path& root, bool require_gt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  auto stems = [&](const char* sub) {
    std::map<std::string, fs::path> out;
    const fs::path dir = root / sub;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") out[e.path().stem().string()] = e.path();
    }
    return out;
  };
  const auto rgb = stems("rgb");
  const auto sparse = stems("sparse");
  const auto gt = stems("gt");
  if (rgb.empty() || sparse.empty()) {
    throw DataError("dataset " + root.string() + ": expected PNG files under rgb/ and sparse/");
  }
  std::optional<Intrinsics> shared;
  if (fs::exists(root / "intrinsics.txt")) shared = Intrinsics::load(root / "intrinsics.txt");

  std::vector<Frame> frames;
  for (const auto& [stem, rgb_path] : rgb) {
    auto sp = sparse.find(stem);
    if (sp == sparse.end()) continue;
    auto g = gt.find(stem);
    if (require_gt && g == gt.end()) {
      throw DataError("frame " + stem + " has no ground truth under gt/ (use predict for unlabeled data)");
    }
    Frame f;
    f.id = stem;
    f.rgb = load_rgb_png(rgb_path);
    f.sparse = load_depth_png(sp->second);
    if (g != gt.end()) f.gt = load_depth_png(g->second);
    const fs::path own = root / "intrinsics" / (stem + ".txt");
    if (fs::exists(own)) {
      f.intrinsics = Intrinsics::load(own);
    } else if (shared) {
      f.intrinsics = *shared;
    } else {
      throw DataError("frame " + stem + ": no intrinsics (intrinsics/" + stem + ".txt or intrinsics.txt)");
    }
    f.validate();
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw DataError("dataset " + root.string() + ": no frame has both rgb/ and sparse/ files");
  return frames;
}

}  // namespace fusenet::dataio
