#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fusenet/tensor.hpp"

namespace fusenet::nd {

// Reverse-mode tape. Every op result owns a node that keeps its parents alive
// and a closure that pushes the node's gradient into those parents.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Process-wide switch for graph recording. Inference paths disable it.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  /// Builds an op result. `backward` is dropped when no parent needs a gradient
  /// or recording is off, so inference keeps no graph alive.
  static Var make_result(Tensor<T> value, std::vector<Var> parents, const char* op,
                         std::function<void(Node<T>&)> backward);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  explicit operator bool() const noexcept { return defined(); }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  /// Gradient buffer; zero-filled with the value's shape if nothing accumulated yet.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.fill(T(0));
  }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  std::shared_ptr<Node<T>> node_;
};

/// Seeds d(root)/d(root) with `seed` (ones when omitted) and propagates.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr);

}  // namespace fusenet::nd
