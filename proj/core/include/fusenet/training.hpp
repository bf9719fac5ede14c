#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusenet/checkpoint.hpp"
#include "fusenet/dataio.hpp"
#include "fusenet/fusenet.hpp"
#include "fusenet/objective.hpp"
#include "fusenet/optim.hpp"

namespace fusenet::train {

struct PhaseConfig {
  int epochs = 0;
  double base_lr = 0;
  std::vector<int> milestones;  // epochs counted from the start of the phase
  objective::LossKind loss = objective::LossKind::L2;
};

/// Two-phase schedule: L2 pretraining, then fine-tuning on L2 + gamma * smooth-L1.
struct TrainConfig {
  model::FuseNetConfig model;
  PhaseConfig phase1{100, 0.0016, {65, 80, 85, 90}, objective::LossKind::L2};
  PhaseConfig phase2{50, 0.00016, {30}, objective::LossKind::Combined};
  double lr_decay = 0.1;
  std::size_t batch_size = 2;
  int crop_height = 0;  // 0 keeps the full frame
  int crop_width = 0;
  std::uint64_t seed = 0;
  nd::OptimizerKind optimizer = nd::OptimizerKind::Adam;

  void validate() const;
  int total_epochs() const { return phase1.epochs + phase2.epochs; }
};

struct EpochLog {
  int epoch = 0;  // global, 0-based
  int phase = 1;
  double lr = 0;
  double mean_loss = 0;
  double val_rmse_mm = 0;
  std::size_t steps = 0;
};

/// Model config as "model.*" keys, and back. Unknown "model.*" keys are rejected.
std::map<std::string, std::string> model_config_record(const model::FuseNetConfig& cfg);
model::FuseNetConfig model_config_from_record(const std::map<std::string, std::string>& kv);

/// Parameters and normalization buffers as "param/" and "buffer/" blobs.
io::Checkpoint model_checkpoint(model::FuseNet<float>& net);
/// Rebuilds a network from a checkpoint; every parameter and buffer must be present.
std::unique_ptr<model::FuseNet<float>> model_from_checkpoint(const io::Checkpoint& ckpt);
void load_weights(model::FuseNet<float>& net, const io::Checkpoint& ckpt);

/// Frames must share extents; eval-mode forward without a graph.
nd::Tensor<float> predict_batch(model::FuseNet<float>& net, std::span<const dataio::Frame> frames, Rng& rng);

/// Pooled metrics over frames with ground truth, one frame at a time.
objective::MetricReport evaluate(model::FuseNet<float>& net, std::span<const dataio::Frame> frames,
                                 std::uint64_t seed, std::vector<objective::MetricReport>* per_frame = nullptr);

class Trainer {
 public:
  /// `val` may be empty, in which case validation runs on `train`.
  Trainer(TrainConfig cfg, std::vector<dataio::Frame> train, std::vector<dataio::Frame> val = {});

  /// One optimizer update on a batch; returns the loss before the update.
  double step(std::span<const dataio::Frame> batch, const objective::LossConfig& loss, double lr, Rng& rng);

  /// Runs epoch next_epoch(), resetting the optimizer when phase 2 begins.
  EpochLog run_epoch();
  int next_epoch() const { return next_epoch_; }
  bool done() const { return next_epoch_ >= cfg_.total_epochs(); }

  /// Learning rate and loss for a global epoch index.
  double lr_at(int epoch) const;
  objective::LossConfig loss_at(int epoch) const;

  /// Weights, BN statistics, optimizer state, and progress.
  io::Checkpoint checkpoint();
  /// Throws ConfigError when the checkpoint's model or schedule differs.
  void restore(const io::Checkpoint& ckpt);

  model::FuseNet<float>& net() { return *net_; }
  nd::Optimizer<float>& optimizer() { return *opt_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  void reset_optimizer();

  TrainConfig cfg_;
  std::vector<dataio::Frame> train_;
  std::vector<dataio::Frame> val_;
  std::unique_ptr<model::FuseNet<float>> net_;
  std::unique_ptr<nd::Optimizer<float>> opt_;
  int next_epoch_ = 0;
};

}  // namespace fusenet::train
