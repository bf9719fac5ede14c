#include "run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fusenet/checkpoint.hpp"
#include "fusenet/errors.hpp"

namespace fusenet::cli {

using K = RunConfig::Kind;

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> table = {
      {"seed", K::Int, "0", "master seed for initialization, sampling, shuffling and synthetic data"},
      {"out", K::String, "runs/latest", "output directory"},
      {"checkpoint", K::String, "", "model checkpoint for eval/predict (default <out>/model.ckpt)"},

      {"data.root", K::String, "", "dataset root with rgb/, sparse/, gt/ and intrinsics"},
      {"data.val_root", K::String, "", "validation dataset root (train only; default: training frames)"},
      {"data.synthetic", K::Bool, "false", "use generated frames instead of data.root"},
      {"data.synthetic_frames", K::Int, "50", "generated training frames"},
      {"data.synthetic_val_frames", K::Int, "4", "generated validation / eval / predict frames"},
      {"data.synthetic_height", K::Int, "64", "generated frame height"},
      {"data.synthetic_width", K::Int, "192", "generated frame width"},
      {"data.synthetic_lines", K::Int, "16", "generated LiDAR scan lines"},
      {"data.synthetic_boxes", K::Int, "3", "boxes per generated scene"},
      {"data.synthetic_noise", K::Real, "0", "sparse depth noise sigma in meters"},

      {"model.channels", K::Int, "16", "block width C"},
      {"model.blocks", K::Int, "3", "block count N"},
      {"model.neighbors", K::Int, "9", "neighbors per point K"},
      {"model.sample_points", K::Int, "10000", "points sampled per frame"},
      {"model.gamma", K::Real, "1", "smooth-l1 weight in the combined loss"},
      {"model.branches", K::String, "s1,s2,cont", "block branches, subset of s1,s2,cont"},

      {"train.phase1_epochs", K::Int, "100", "l2 phase epochs"},
      {"train.phase1_lr", K::Real, "0.0016", "l2 phase initial learning rate"},
      {"train.phase1_milestones", K::IntList, "65,80,85,90", "l2 phase decay epochs"},
      {"train.phase2_epochs", K::Int, "50", "combined-loss phase epochs"},
      {"train.phase2_lr", K::Real, "0.00016", "combined-loss phase initial learning rate"},
      {"train.phase2_milestones", K::IntList, "30", "combined-loss phase decay epochs, counted within the phase"},
      {"train.lr_decay", K::Real, "0.1", "learning-rate factor at each milestone"},
      {"train.batch_size", K::Int, "2", "frames per step"},
      {"train.crop_height", K::Int, "0", "random crop height (0: full frame)"},
      {"train.crop_width", K::Int, "0", "random crop width (0: full frame)"},
      {"train.optimizer", K::String, "adam", "adam or sgd"},
      {"train.resume", K::String, "", "checkpoint to resume training from"},

      {"viz", K::Bool, "false", "write colorized depth images in predict"},
      {"viz.depth_min", K::Real, "0", "depth at the near end of the colormap (m)"},
      {"viz.depth_max", K::Real, "80", "depth at the far end of the colormap (m)"},

      {"gradcheck.seeds", K::Int, "20", "random instances per operation"},

      {"bench.points", K::Int, "10000", "point count"},
      {"bench.neighbors", K::Int, "9", "neighbors per point"},
      {"bench.channels", K::Int, "16", "feature width"},
      {"bench.height", K::Int, "64", "input height for the block latency run"},
      {"bench.width", K::Int, "192", "input width for the block latency run"},
      {"bench.repeats", K::Int, "5", "timed repetitions per measurement"},
  };
  return table;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::apply_paper_scale() {
  set("model.channels", "64");
  set("model.blocks", "12");
  set("model.neighbors", "9");
  set("model.sample_points", "10000");
  set("train.batch_size", "32");
  set("train.crop_height", "352");
  set("train.crop_width", "1216");
  set("train.phase1_epochs", "100");
  set("train.phase1_lr", "0.0016");
  set("train.phase1_milestones", "65,80,85,90");
  set("train.phase2_epochs", "50");
  set("train.phase2_lr", "0.00016");
  set("train.phase2_milestones", "30");
  set("data.synthetic_height", "352");
  set("data.synthetic_width", "1216");
  set("data.synthetic_lines", "64");
}

const RunConfig::Key& RunConfig::lookup(const std::string& key) const {
  for (const auto& k : keys()) {
    if (k.name == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "' (run with --help for the list)");
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [key, value] : io::parse_key_values(ss.str(), path.string())) {
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Key& k = lookup(key);
  std::string v = value;
  if (k.kind == Kind::Bool) {
    if (v == "1" || v == "yes" || v == "on") v = "true";
    if (v == "0" || v == "no" || v == "off") v = "false";
  }
  const auto previous = values_[key];
  values_[key] = v;
  // Parse now so a bad value is reported where it was given.
  try {
    switch (k.kind) {
      case Kind::Bool:
        flag(key);
        break;
      case Kind::Int:
        integer(key);
        break;
      case Kind::Real:
        real(key);
        break;
      case Kind::IntList:
        int_list(key);
        break;
      case Kind::String:
        break;
    }
  } catch (...) {
    values_[key] = previous;
    throw;
  }
}

const std::string& RunConfig::str(const std::string& key) const {
  lookup(key);
  return values_.at(key);
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = str(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const auto& v = str(key);
  std::int64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError(key + ": must be non-negative, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

double RunConfig::real(const std::string& key) const {
  const auto& v = str(key);
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  const auto& v = str(key);
  std::vector<int> out;
  std::size_t start = 0;
  while (start < v.size()) {
    const auto comma = std::min(v.find(',', start), v.size());
    int x = 0;
    const auto [end, ec] = std::from_chars(v.data() + start, v.data() + comma, x);
    if (ec != std::errc() || end != v.data() + comma) {
      throw ConfigError(key + ": expected comma-separated integers, got '" + v + "'");
    }
    out.push_back(x);
    start = comma + 1;
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "# fusenet run configuration; pass back with --config to reproduce\n";
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string s = dot == std::string::npos ? "" : k.name.substr(0, dot);
    if (s != section) {
      os << "\n";
      section = s;
    }
    os << "# " << k.help << "\n" << k.name << " = " << values_.at(k.name) << "\n";
  }
  return os.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_text();
}

model::FuseNetConfig RunConfig::model_config() const {
  model::FuseNetConfig c;
  c.channels = count("model.channels");
  c.blocks = count("model.blocks");
  c.neighbors = count("model.neighbors");
  c.sample_points = count("model.sample_points");
  c.gamma = real("model.gamma");
  c.branches = model::BranchSet::parse(str("model.branches"));
  c.validate();
  return c;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig c;
  c.model = model_config();
  c.phase1 = {static_cast<int>(integer("train.phase1_epochs")), real("train.phase1_lr"),
              int_list("train.phase1_milestones"), objective::LossKind::L2};
  c.phase2 = {static_cast<int>(integer("train.phase2_epochs")), real("train.phase2_lr"),
              int_list("train.phase2_milestones"), objective::LossKind::Combined};
  c.lr_decay = real("train.lr_decay");
  c.batch_size = count("train.batch_size");
  c.crop_height = static_cast<int>(integer("train.crop_height"));
  c.crop_width = static_cast<int>(integer("train.crop_width"));
  c.seed = static_cast<std::uint64_t>(integer("seed"));
  try {
    c.optimizer = nd::parse_optimizer_kind(str("train.optimizer"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.optimizer: ") + e.what());
  }
  c.validate();
  return c;
}

dataio::SyntheticSceneConfig RunConfig::synthetic_config() const {
  dataio::SyntheticSceneConfig c;
  c.height = static_cast<int>(integer("data.synthetic_height"));
  c.width = static_cast<int>(integer("data.synthetic_width"));
  c.lidar_line_count = static_cast<int>(integer("data.synthetic_lines"));
  c.box_count = static_cast<int>(integer("data.synthetic_boxes"));
  c.noise_sigma = real("data.synthetic_noise");
  c.validate();
  return c;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  const auto& c = str("checkpoint");
  return c.empty() ? out_dir() / "model.ckpt" : std::filesystem::path(c);
}

}  // namespace fusenet::cli
