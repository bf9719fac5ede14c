#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fstream>

#include "colormap.hpp"
#include "fusenet/checkpoint.hpp"
#include "fusenet/errors.hpp"
#include "fusenet/gradcheck.hpp"
#include "fusenet/objective.hpp"

namespace fusenet::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams for generated frames; model and training use streams below 2^20.
constexpr std::uint64_t kTrainFrameStream = 1u << 20;
constexpr std::uint64_t kHeldOutFrameStream = 2u << 20;
constexpr std::uint64_t kPredictStream = 3u << 20;

fs::path make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
  return dir;
}

std::vector<dataio::Frame> synthetic_frames(const RunConfig& cfg, std::size_t n, std::uint64_t stream,
                                            const char* tag) {
  auto sc = cfg.synthetic_config();
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  std::vector<dataio::Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    sc.seed = derive_seed(seed, stream + i);
    out.push_back(dataio::synth_generate(sc));
    char id[64];
    std::snprintf(id, sizeof(id), "synthetic_%s_%03zu", tag, i);
    out.back().id = id;
  }
  return out;
}

/// Frames for eval/predict: generated held-out frames or data.root.
std::vector<dataio::Frame> inference_frames(const RunConfig& cfg) {
  if (cfg.flag("data.synthetic")) {
    return synthetic_frames(cfg, cfg.count("data.synthetic_val_frames"), kHeldOutFrameStream, "val");
  }
  if (cfg.str("data.root").empty()) throw ConfigError("no input frames: pass --data.root DIR or --synthetic");
  return dataio::load_dataset(cfg.str("data.root"), false);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

/// Saves through a temporary name so an interrupted write never leaves a
/// truncated checkpoint behind.
void save_checkpoint_atomically(const io::Checkpoint& ckpt, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  io::save_checkpoint(ckpt, tmp);
  fs::rename(tmp, path);
}

std::unique_ptr<model::FuseNet<float>> load_model(const RunConfig& cfg) {
  const auto path = cfg.checkpoint_path();
  if (!fs::exists(path)) {
    throw DataError("checkpoint " + path.string() + " not found; train first or pass --checkpoint PATH");
  }
  auto net = train::model_from_checkpoint(io::load_checkpoint(path));
  spdlog::info("loaded {} ({} parameters)", path.string(), net->param_count());
  return net;
}

}  // namespace

fs::path prepare_output(const RunConfig& cfg) {
  const auto dir = make_dir(cfg.out_dir());
  cfg.save(dir / "config.txt");
  return dir;
}

int cmd_train(const RunConfig& cfg) {
  const auto tc = cfg.train_config();
  std::vector<dataio::Frame> train_frames, val_frames;
  if (cfg.flag("data.synthetic")) {
    train_frames = synthetic_frames(cfg, cfg.count("data.synthetic_frames"), kTrainFrameStream, "train");
    val_frames = synthetic_frames(cfg, cfg.count("data.synthetic_val_frames"), kHeldOutFrameStream, "val");
  } else {
    if (cfg.str("data.root").empty()) {
      throw ConfigError("no training data: pass --data.root DIR or --synthetic");
    }
    train_frames = dataio::load_dataset(cfg.str("data.root"), true);
    if (!cfg.str("data.val_root").empty()) val_frames = dataio::load_dataset(cfg.str("data.val_root"), true);
  }
  const auto out = prepare_output(cfg);
  spdlog::info("training on {} frames, validating on {}", train_frames.size(),
               val_frames.empty() ? train_frames.size() : val_frames.size());

  train::Trainer trainer(tc, std::move(train_frames), std::move(val_frames));
  spdlog::info("model C={} N={} K={}: {} parameters", tc.model.channels, tc.model.blocks, tc.model.neighbors,
               trainer.net().param_count());

  const bool resumed = !cfg.str("train.resume").empty();
  if (resumed) {
    trainer.restore(io::load_checkpoint(cfg.str("train.resume")));
    spdlog::info("resumed from {} at epoch {}", cfg.str("train.resume"), trainer.next_epoch());
  }

  const auto log_path = out / "train_log.tsv";
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());
  if (!resumed) log << "epoch\tphase\tlr\tmean_loss\tval_rmse_mm\tsteps\tseconds\n";

  const auto ckpt_path = out / "model.ckpt";
  while (!trainer.done()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto e = trainer.run_epoch();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char row[256];
    std::snprintf(row, sizeof(row), "%d\t%d\t%.9g\t%.9g\t%.3f\t%zu\t%.2f\n", e.epoch, e.phase, e.lr, e.mean_loss,
                  e.val_rmse_mm, e.steps, secs);
    log << row << std::flush;
    save_checkpoint_atomically(trainer.checkpoint(), ckpt_path);
    spdlog::info("epoch {}/{} phase {} lr {:.3g} loss {:.5g} val rmse {:.1f} mm ({:.1f}s)", e.epoch + 1,
                 tc.total_epochs(), e.phase, e.lr, e.mean_loss, e.val_rmse_mm, secs);
  }
  std::printf("checkpoint: %s\nlog: %s\n", ckpt_path.c_str(), log_path.c_str());
  return exit_code::kOk;
}

int cmd_eval(const RunConfig& cfg) {
  const auto frames = inference_frames(cfg);
  for (const auto& f : frames) {
    if (!f.gt) {
      throw DataError("frame '" + f.id + "' has no ground truth; use `fusenet predict` for unlabeled frames");
    }
  }
  auto net = load_model(cfg);
  const auto out = prepare_output(cfg);

  std::vector<objective::MetricReport> per_frame;
  const auto pooled = train::evaluate(*net, frames, static_cast<std::uint64_t>(cfg.integer("seed")), &per_frame);
  std::string table = objective::MetricReport::table_header() + "\n";
  for (std::size_t i = 0; i < frames.size(); ++i) table += per_frame[i].table_row(frames[i].id) + "\n";
  table += pooled.table_row("all (pooled)") + "\n";
  std::fputs(table.c_str(), stdout);
  write_text(out / "metrics_table.txt", table);
  write_text(out / "metrics.txt", pooled.to_text());
  return exit_code::kOk;
}

int cmd_predict(const RunConfig& cfg) {
  const auto frames = inference_frames(cfg);
  auto net = load_model(cfg);
  const auto out = prepare_output(cfg);
  const auto depth_dir = make_dir(out / "depth");
  const bool viz = cfg.flag("viz");
  const double near = cfg.real("viz.depth_min"), far = cfg.real("viz.depth_max");
  if (viz && !(far > near)) throw ConfigError("viz.depth_max must exceed viz.depth_min");
  const auto viz_dir = viz ? make_dir(out / "viz") : fs::path();

  Rng rng(derive_seed(static_cast<std::uint64_t>(cfg.integer("seed")), kPredictStream));
  for (const auto& f : frames) {
    const auto pred = train::predict_batch(*net, {&f, 1}, rng);
    const auto depth = geometry::DepthImage::from_values(f.height(), f.width(), pred.storage());
    dataio::save_depth_png(depth, depth_dir / (f.id + ".png"));
    if (viz) dataio::save_rgb_png(colorize(depth, near, far), viz_dir / (f.id + ".png"));
  }
  std::printf("wrote %zu predictions to %s\n", frames.size(), depth_dir.c_str());
  return exit_code::kOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
  verify::GradcheckOptions opt;
  opt.seeds = static_cast<int>(cfg.count("gradcheck.seeds"));
  if (opt.seeds < 1) throw ConfigError("gradcheck.seeds must be at least 1");
  opt.base_seed = static_cast<std::uint64_t>(cfg.integer("seed")) + 1;
  const auto out = prepare_output(cfg);
  const auto results = verify::run_cases(verify::default_cases(), opt);
  const auto table = verify::format_results(results);
  std::fputs(table.c_str(), stdout);
  write_text(out / "gradcheck.txt", table);
  for (const auto& r : results) {
    if (!r.passed()) return exit_code::kVerification;
  }
  return exit_code::kOk;
}

}  // namespace fusenet::cli
