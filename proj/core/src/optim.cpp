#include "fusenet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fusenet::nd {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               std::int64_t step, const AdamOptions& opt) {
  if (!(lr > 0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (step < 1) throw std::invalid_argument("adam_step: step index is 1-based");
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient length mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * g;
    const double v = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + opt.eps);
    params[i] = static_cast<T>(params[i] - update);
  }
}

double lr_schedule(int epoch, double base_lr, std::span<const int> milestones, double factor) {
  int decays = 0;
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("lr_schedule: milestones must be strictly increasing");
    }
    if (milestones[i] <= epoch) ++decays;
  }
  return base_lr * std::pow(factor, decays);
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

template <typename T>
Optimizer<T>::Optimizer(OptimizerKind kind, std::vector<NamedParam<T>> params, AdamOptions adam,
                        SgdOptions sgd)
    : kind_(kind), params_(std::move(params)), adam_(adam), sgd_(sgd) {
  for (const auto& p : params_) {
    if (kind_ == OptimizerKind::Adam) {
      adam_state_.push_back({std::vector<T>(p.var.numel(), T(0)), std::vector<T>(p.var.numel(), T(0))});
    } else {
      velocity_.emplace_back(p.var.numel(), T(0));
    }
  }
}

template <typename T>
void Optimizer<T>::step(double lr) {
  if (!(lr > 0)) throw std::invalid_argument("Optimizer::step: learning rate must be positive");
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& p = params_[i].var;
    const Tensor<T>& g = p.grad();
    if (kind_ == OptimizerKind::Adam) {
      adam_step<T>(p.mutable_value().span(), g.span(), adam_state_[i], lr, steps_, adam_);
    } else {
      auto& vel = velocity_[i];
      auto& w = p.mutable_value();
      for (std::size_t j = 0; j < vel.size(); ++j) {
        vel[j] = static_cast<T>(sgd_.momentum * vel[j] + g[j]);
        w[j] = static_cast<T>(w[j] - lr * vel[j]);
      }
    }
  }
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> Optimizer<T>::state_views() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (kind_ == OptimizerKind::Adam) {
      out.emplace_back(params_[i].name + ".m", &adam_state_[i].m);
      out.emplace_back(params_[i].name + ".v", &adam_state_[i].v);
    } else {
      out.emplace_back(params_[i].name + ".velocity", &velocity_[i]);
    }
  }
  return out;
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double,
                               std::int64_t, const AdamOptions&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double,
                                std::int64_t, const AdamOptions&);
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace fusenet::nd
