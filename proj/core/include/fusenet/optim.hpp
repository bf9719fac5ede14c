#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fusenet/layers.hpp"

namespace fusenet::nd {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdOptions {
  double momentum = 0.9;
};

/// Moment estimates for one parameter tensor.
template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
};

/// One bias-corrected Adam update in place. `step` is the 1-based step index.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               std::int64_t step, const AdamOptions& opt = {});

/// base_lr * factor^(number of milestones <= epoch). Milestones must be strictly increasing.
double lr_schedule(int epoch, double base_lr, std::span<const int> milestones, double factor);

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// Owns per-parameter state for the whole model and applies updates from the
/// accumulated gradients. State is keyed by parameter name for checkpointing.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<NamedParam<T>> params, AdamOptions adam = {},
            SgdOptions sgd = {});

  void step(double lr);
  void zero_grad();

  OptimizerKind kind() const { return kind_; }
  std::int64_t steps_taken() const { return steps_; }
  void set_steps_taken(std::int64_t s) { steps_ = s; }

  /// Named state tensors (Adam: ".m"/".v"; SGD: ".velocity") for serialization.
  std::vector<std::pair<std::string, std::vector<T>*>> state_views();

 private:
  OptimizerKind kind_;
  std::vector<NamedParam<T>> params_;
  AdamOptions adam_;
  SgdOptions sgd_;
  std::vector<AdamState<T>> adam_state_;
  std::vector<std::vector<T>> velocity_;
  std::int64_t steps_ = 0;
};

}  // namespace fusenet::nd
