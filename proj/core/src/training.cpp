#include "fusenet/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "fusenet/errors.hpp"

namespace fusenet::train {

namespace {

constexpr std::uint64_t kEvalSalt = 0xE7A1;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

void require_gt(std::span<const dataio::Frame> frames) {
  for (const auto& f : frames) {
    if (!f.gt) throw DataError("frame '" + f.id + "' has no ground truth; training and evaluation need gt/ images");
  }
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  for (const auto* p : {&phase1, &phase2}) {
    const char* which = p == &phase1 ? "phase1" : "phase2";
    if (p->epochs < 0) throw ConfigError(std::string(which) + "_epochs must be non-negative");
    if (p->epochs > 0 && !(p->base_lr > 0)) throw ConfigError(std::string(which) + "_lr must be positive");
    for (std::size_t i = 1; i < p->milestones.size(); ++i) {
      if (p->milestones[i] <= p->milestones[i - 1]) {
        throw ConfigError(std::string(which) + "_milestones must be strictly increasing");
      }
    }
  }
  if (total_epochs() < 1) throw ConfigError("at least one training epoch is required");
  if (!(lr_decay > 0)) throw ConfigError("lr_decay must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (crop_height < 0 || crop_width < 0 || (crop_height == 0) != (crop_width == 0)) {
    throw ConfigError("crop_height and crop_width must both be 0 (no crop) or both positive");
  }
  if (crop_height % 4 != 0 || crop_width % 4 != 0) throw ConfigError("crop extents must be multiples of 4");
}

std::map<std::string, std::string> model_config_record(const model::FuseNetConfig& cfg) {
  return {{"model.channels", std::to_string(cfg.channels)},
          {"model.blocks", std::to_string(cfg.blocks)},
          {"model.neighbors", std::to_string(cfg.neighbors)},
          {"model.sample_points", std::to_string(cfg.sample_points)},
          {"model.gamma", fmt_double(cfg.gamma)},
          {"model.branches", cfg.branches.str()}};
}

model::FuseNetConfig model_config_from_record(const std::map<std::string, std::string>& kv) {
  model::FuseNetConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) != 0) continue;
    if (k == "model.channels") cfg.channels = parse_size(k, v);
    else if (k == "model.blocks") cfg.blocks = parse_size(k, v);
    else if (k == "model.neighbors") cfg.neighbors = parse_size(k, v);
    else if (k == "model.sample_points") cfg.sample_points = parse_size(k, v);
    else if (k == "model.gamma") cfg.gamma = parse_real(k, v);
    else if (k == "model.branches") cfg.branches = model::BranchSet::parse(v);
    else throw ConfigError("unknown model key '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

io::Checkpoint model_checkpoint(model::FuseNet<float>& net) {
  io::Checkpoint ckpt;
  ckpt.config = model_config_record(net.config());
  auto ps = net.params();
  for (const auto& p : ps.params) {
    ckpt.blobs.push_back({"param/" + p.name, p.var.shape(), p.var.value().storage()});
  }
  for (const auto& b : ps.buffers) {
    ckpt.blobs.push_back({"buffer/" + b.name, b.tensor->shape(), b.tensor->storage()});
  }
  return ckpt;
}

void load_weights(model::FuseNet<float>& net, const io::Checkpoint& ckpt) {
  auto ps = net.params();
  auto fetch = [&ckpt](const std::string& name, nd::Tensor<float>& dst) {
    const io::Blob* b = ckpt.find(name);
    if (!b) throw DataError("checkpoint is missing '" + name + "'");
    if (b->shape != dst.shape()) {
      throw DataError("checkpoint blob '" + name + "' has shape " + nd::shape_str(b->shape) + ", model expects " +
                      nd::shape_str(dst.shape()));
    }
    dst = nd::Tensor<float>(b->shape, b->data);
  };
  for (auto& p : ps.params) fetch("param/" + p.name, p.var.mutable_value());
  for (auto& b : ps.buffers) fetch("buffer/" + b.name, *b.tensor);
}

std::unique_ptr<model::FuseNet<float>> model_from_checkpoint(const io::Checkpoint& ckpt) {
  auto net = std::make_unique<model::FuseNet<float>>(model_config_from_record(ckpt.config), 0);
  load_weights(*net, ckpt);
  return net;
}

nd::Tensor<float> predict_batch(model::FuseNet<float>& net, std::span<const dataio::Frame> frames, Rng& rng) {
  nd::NoGradGuard no_grad;
  net.set_training(false);
  return net.predict(frames, rng).value();
}

objective::MetricReport evaluate(model::FuseNet<float>& net, std::span<const dataio::Frame> frames,
                                 std::uint64_t seed, std::vector<objective::MetricReport>* per_frame) {
  if (frames.empty()) throw DataError("evaluation needs at least one frame");
  require_gt(frames);
  Rng rng(derive_seed(seed, kEvalSalt));
  objective::MetricAccumulator pooled;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto pred = predict_batch(net, frames.subspan(i, 1), rng);
    pooled.add(pred.span(), *frames[i].gt);
    if (per_frame) per_frame->push_back(objective::metrics(pred.span(), *frames[i].gt));
  }
  return pooled.report();
}

Trainer::Trainer(TrainConfig cfg, std::vector<dataio::Frame> train, std::vector<dataio::Frame> val)
    : cfg_(std::move(cfg)), train_(std::move(train)), val_(std::move(val)) {
  cfg_.validate();
  if (train_.empty()) throw DataError("training set is empty");
  require_gt(train_);
  require_gt(val_);
  net_ = std::make_unique<model::FuseNet<float>>(cfg_.model, derive_seed(cfg_.seed, 0));
  reset_optimizer();
}

void Trainer::reset_optimizer() {
  opt_ = std::make_unique<nd::Optimizer<float>>(cfg_.optimizer, net_->params().params);
}

double Trainer::lr_at(int epoch) const {
  if (epoch < cfg_.phase1.epochs) {
    return nd::lr_schedule(epoch, cfg_.phase1.base_lr, cfg_.phase1.milestones, cfg_.lr_decay);
  }
  return nd::lr_schedule(epoch - cfg_.phase1.epochs, cfg_.phase2.base_lr, cfg_.phase2.milestones, cfg_.lr_decay);
}

objective::LossConfig Trainer::loss_at(int epoch) const {
  const auto kind = epoch < cfg_.phase1.epochs ? cfg_.phase1.loss : cfg_.phase2.loss;
  return {kind, cfg_.model.gamma};
}

double Trainer::step(std::span<const dataio::Frame> batch, const objective::LossConfig& loss, double lr, Rng& rng) {
  require_gt(batch);
  net_->set_training(true);
  opt_->zero_grad();
  const auto pred = net_->predict(batch, rng);
  std::vector<geometry::DepthImage> gt;
  for (const auto& f : batch) gt.push_back(*f.gt);
  const auto l = objective::masked_loss<float>(pred, gt, loss);
  nd::backward(l);
  opt_->step(lr);
  return l.value()[0];
}

EpochLog Trainer::run_epoch() {
  if (done()) throw std::logic_error("Trainer::run_epoch: schedule already complete");
  const int epoch = next_epoch_;
  if (epoch == cfg_.phase1.epochs && epoch > 0) reset_optimizer();

  Rng rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch) + 1));
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  EpochLog log;
  log.epoch = epoch;
  log.phase = epoch < cfg_.phase1.epochs ? 1 : 2;
  log.lr = lr_at(epoch);
  const auto loss = loss_at(epoch);
  double total = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    std::vector<dataio::Frame> batch;
    for (std::size_t j = start; j < std::min(order.size(), start + cfg_.batch_size); ++j) {
      const auto& f = train_[order[j]];
      const bool crop = cfg_.crop_height > 0 && (cfg_.crop_height < f.height() || cfg_.crop_width < f.width());
      batch.push_back(crop ? dataio::random_crop(f, cfg_.crop_height, cfg_.crop_width, rng) : f);
    }
    total += step(batch, loss, log.lr, rng);
    ++log.steps;
  }
  log.mean_loss = total / static_cast<double>(log.steps);
  log.val_rmse_mm = evaluate(*net_, val_.empty() ? train_ : val_, cfg_.seed).rmse_mm;
  ++next_epoch_;
  return log;
}

io::Checkpoint Trainer::checkpoint() {
  io::Checkpoint ckpt = model_checkpoint(*net_);
  ckpt.config["train.seed"] = std::to_string(cfg_.seed);
  ckpt.config["train.optimizer"] = nd::to_string(cfg_.optimizer);
  ckpt.config["state.next_epoch"] = std::to_string(next_epoch_);
  ckpt.config["state.optimizer_steps"] = std::to_string(opt_->steps_taken());
  for (auto& [name, vec] : opt_->state_views()) {
    ckpt.blobs.push_back({"optim/" + name, {vec->size()}, *vec});
  }
  return ckpt;
}

void Trainer::restore(const io::Checkpoint& ckpt) {
  auto expect = model_config_record(cfg_.model);
  expect["train.seed"] = std::to_string(cfg_.seed);
  expect["train.optimizer"] = nd::to_string(cfg_.optimizer);
  for (const auto& [k, v] : expect) {
    auto it = ckpt.config.find(k);
    const std::string have = it == ckpt.config.end() ? "<absent>" : it->second;
    // Compare through the parser so "1" and "1.0" agree for reals.
    const bool same = have == v || (k == "model.gamma" && it != ckpt.config.end() &&
                                    parse_real(k, have) == parse_real(k, v));
    if (!same) {
      throw ConfigError("checkpoint was written with " + k + "=" + have + " but the run uses " + k + "=" + v +
                        "; rerun with the checkpoint's values or start without resuming");
    }
  }
  load_weights(*net_, ckpt);
  next_epoch_ = static_cast<int>(parse_size("state.next_epoch", ckpt.value("state.next_epoch")));
  reset_optimizer();
  opt_->set_steps_taken(static_cast<std::int64_t>(parse_size("state.optimizer_steps", ckpt.value("state.optimizer_steps"))));
  for (auto& [name, vec] : opt_->state_views()) {
    const io::Blob* b = ckpt.find("optim/" + name);
    if (!b || b->data.size() != vec->size()) throw DataError("checkpoint optimizer state '" + name + "' is missing or mis-sized");
    *vec = b->data;
  }
}

}  // namespace fusenet::train
