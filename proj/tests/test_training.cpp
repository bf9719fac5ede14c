#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fusenet/checkpoint.hpp"
#include "fusenet/errors.hpp"
#include "fusenet/training.hpp"

using namespace fusenet;
using namespace fusenet::train;
namespace fs = std::filesystem;

namespace {

std::vector<dataio::Frame> tiny_frames(int n) {
  std::vector<dataio::Frame> out;
  dataio::SyntheticSceneConfig sc;
  sc.height = 16;
  sc.width = 32;
  sc.lidar_line_count = 4;
  for (int i = 0; i < n; ++i) {
    sc.seed = static_cast<std::uint64_t>(i + 10);
    out.push_back(dataio::synth_generate(sc));
  }
  return out;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.channels = 4;
  c.model.blocks = 1;
  c.model.neighbors = 3;
  c.phase1 = {2, 0.01, {1}, objective::LossKind::L2};
  c.phase2 = {2, 0.001, {1}, objective::LossKind::Combined};
  c.batch_size = 2;
  c.crop_height = 12;
  c.crop_width = 24;
  c.seed = 5;
  return c;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("fusenet_train_" + name); }

std::vector<float> all_weights(model::FuseNet<float>& net) {
  std::vector<float> out;
  auto ps = net.params();
  for (auto& p : ps.params) out.insert(out.end(), p.var.value().storage().begin(), p.var.value().storage().end());
  for (auto& b : ps.buffers) out.insert(out.end(), b.tensor->storage().begin(), b.tensor->storage().end());
  return out;
}

}  // namespace

TEST(KeyValues, ParseCommentsAndErrors) {
  const auto kv = io::parse_key_values("# header\nalpha = 1\n\nbeta=two # trailing\n", "cfg");
  EXPECT_EQ(kv.at("alpha"), "1");
  EXPECT_EQ(kv.at("beta"), "two");
  EXPECT_THROW(io::parse_key_values("novalue\n", "cfg"), ConfigError);
  EXPECT_THROW(io::parse_key_values("=3\n", "cfg"), ConfigError);
  EXPECT_EQ(io::parse_key_values(io::format_key_values(kv), "again"), kv);
}

TEST(CheckpointFile, RoundTripAndCorruption) {
  io::Checkpoint c;
  c.config = {{"a", "1"}, {"b", "x y"}};
  c.blobs.push_back({"w", {2, 3}, {1, -2, 3.5f, 0, 1e-30f, -0.0f}});
  c.blobs.push_back({"empty", {0}, {}});
  const auto path = temp_file("rt.ckpt");
  io::save_checkpoint(c, path);
  const auto back = io::load_checkpoint(path);
  EXPECT_EQ(back.version, io::Checkpoint::kFormatVersion);
  EXPECT_EQ(back.config, c.config);
  ASSERT_EQ(back.blobs.size(), 2u);
  EXPECT_EQ(back.blobs[0].shape, (nd::Shape{2, 3}));
  EXPECT_EQ(back.blobs[0].data, c.blobs[0].data);
  EXPECT_TRUE(std::signbit(back.blobs[0].data[5]));

  // little-endian layout: magic, then version 1
  std::ifstream in(path, std::ios::binary);
  std::string head(12, '\0');
  in.read(head.data(), 12);
  EXPECT_EQ(head.substr(0, 8), "FUSENETC");
  EXPECT_EQ(head[8], '\x01');
  EXPECT_EQ(head[11], '\0');
  in.close();

  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_THROW(io::load_checkpoint(path), DataError);
  std::ofstream(path, std::ios::binary) << "NOTACKPT";
  EXPECT_THROW(io::load_checkpoint(path), DataError);
  fs::remove(path);
  EXPECT_THROW(io::load_checkpoint(path), DataError);
}

TEST(ModelCheckpoint, ReloadGivesBitIdenticalPredictions) {
  const auto frames = tiny_frames(1);
  TrainConfig cfg = tiny_config();
  Trainer t(cfg, frames);
  t.run_epoch();
  const auto path = temp_file("model.ckpt");
  io::save_checkpoint(model_checkpoint(t.net()), path);
  auto net = model_from_checkpoint(io::load_checkpoint(path));
  Rng a(1), b(1);
  EXPECT_EQ(predict_batch(t.net(), frames, a).storage(), predict_batch(*net, frames, b).storage());
  fs::remove(path);
}

TEST(ModelCheckpoint, ConfigRecordRoundTrip) {
  model::FuseNetConfig c;
  c.channels = 12;
  c.blocks = 4;
  c.neighbors = 6;
  c.gamma = 0.25;
  c.branches = model::BranchSet::parse("s1,cont");
  const auto back = model_config_from_record(model_config_record(c));
  EXPECT_EQ(back.channels, 12u);
  EXPECT_EQ(back.blocks, 4u);
  EXPECT_EQ(back.neighbors, 6u);
  EXPECT_EQ(back.gamma, 0.25);
  EXPECT_EQ(back.branches, c.branches);
  EXPECT_THROW(model_config_from_record({{"model.depth", "3"}}), ConfigError);
  EXPECT_THROW(model_config_from_record({{"model.channels", "x"}}), ConfigError);
}

TEST(TrainerTest, ScheduleFollowsPhases) {
  TrainConfig c;
  Trainer t(c, tiny_frames(1));
  EXPECT_EQ(c.total_epochs(), 150);
  EXPECT_DOUBLE_EQ(t.lr_at(0), 0.0016);
  EXPECT_NEAR(t.lr_at(80), 0.000016, 1e-18);
  EXPECT_DOUBLE_EQ(t.lr_at(100), 0.00016);
  EXPECT_NEAR(t.lr_at(130), 0.000016, 1e-18);
  EXPECT_EQ(t.loss_at(99).kind, objective::LossKind::L2);
  EXPECT_EQ(t.loss_at(100).kind, objective::LossKind::Combined);
  EXPECT_EQ(t.loss_at(100).gamma, 1.0);
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  const auto frames = tiny_frames(3);
  const auto cfg = tiny_config();
  Trainer full(cfg, frames);
  std::vector<EpochLog> logs;
  while (!full.done()) logs.push_back(full.run_epoch());
  EXPECT_EQ(logs.size(), 4u);
  EXPECT_EQ(logs[2].phase, 2);

  for (int stop : {1, 2, 3}) {
    const auto path = temp_file("resume.ckpt");
    {
      Trainer first(cfg, frames);
      for (int e = 0; e < stop; ++e) first.run_epoch();
      io::save_checkpoint(first.checkpoint(), path);
    }
    Trainer second(cfg, frames);
    second.restore(io::load_checkpoint(path));
    EXPECT_EQ(second.next_epoch(), stop);
    while (!second.done()) {
      const auto log = second.run_epoch();
      EXPECT_EQ(log.mean_loss, logs[log.epoch].mean_loss);
    }
    EXPECT_EQ(all_weights(second.net()), all_weights(full.net())) << "stopped after epoch " << stop;
    fs::remove(path);
  }
}

TEST(TrainerTest, IncompatibleCheckpointIsRejected) {
  const auto frames = tiny_frames(1);
  Trainer t(tiny_config(), frames);
  const auto ckpt = t.checkpoint();
  auto other = tiny_config();
  other.model.channels = 6;
  Trainer u(other, frames);
  try {
    u.restore(ckpt);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.channels"), std::string::npos);
  }
}

TEST(TrainerTest, LossDecreasesOverEpochs) {
  auto cfg = tiny_config();
  cfg.phase1 = {6, 0.01, {}, objective::LossKind::L2};
  cfg.phase2 = {0, 0.001, {}, objective::LossKind::Combined};
  Trainer t(cfg, tiny_frames(2));
  const double first = t.run_epoch().mean_loss;
  double last = first;
  while (!t.done()) last = t.run_epoch().mean_loss;
  EXPECT_LT(last, first);
}

TEST(TrainerTest, RequiresGroundTruth) {
  auto frames = tiny_frames(1);
  frames[0].gt.reset();
  EXPECT_THROW(Trainer(tiny_config(), frames), DataError);
  model::FuseNet<float> net(tiny_config().model, 0);
  EXPECT_THROW(evaluate(net, frames, 0), DataError);
}

TEST(Evaluate, GroundTruthAgainstItselfIsZero) {
  auto frames = tiny_frames(2);
  for (auto& f : frames) {
    objective::MetricAccumulator acc;
    acc.add(std::span<const float>(f.gt->values), *f.gt);
    const auto r = acc.report();
    EXPECT_EQ(r.rmse_mm, 0.0);
    EXPECT_EQ(r.irmse, 0.0);
  }
}

TEST(TrainConfigType, Validation) {
  auto c = tiny_config();
  c.phase1.milestones = {3, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.crop_width = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.phase1.epochs = c.phase2.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
