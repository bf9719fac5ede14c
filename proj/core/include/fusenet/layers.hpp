#pragma once

#include <string>
#include <vector>

#include "fusenet/autograd.hpp"
#include "fusenet/rng.hpp"

namespace fusenet::nd {

template <typename T>
class BatchNormLayer;

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

/// Flat view over a model's learnable parameters, persistent buffers, and
/// normalization layers. Pointers stay valid while the model is alive.
template <typename T>
struct ParamSet {
  std::vector<NamedParam<T>> params;
  std::vector<NamedBuffer<T>> buffers;
  std::vector<BatchNormLayer<T>*> norms;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : params) p.var.zero_grad();
  }
  void set_training(bool on);
};

/// Uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)].
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, int stride,
              bool with_bias, Rng& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamSet<T>& out);

  std::size_t in_channels() const { return kernel.shape()[1]; }
  std::size_t out_channels() const { return kernel.shape()[0]; }
  std::size_t kernel_size() const { return kernel.shape()[2]; }

  Var<T> kernel;  // [C_out, C_in, k, k]
  Var<T> bias;    // [C_out] or undefined
  int stride;
  int padding;
};

template <typename T>
class BatchNormLayer {
 public:
  explicit BatchNormLayer(std::size_t channels);

  Var<T> forward(const Var<T>& x);
  void collect(const std::string& prefix, ParamSet<T>& out);

  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);
  bool training = true;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer(std::size_t in_features, std::size_t out_features, bool with_bias, Rng& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamSet<T>& out);

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }

  Var<T> weight;  // [D_out, D_in]
  Var<T> bias;    // [D_out] or undefined
};

/// conv -> batch norm -> ReLU, the unit every 2-D stage is built from.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu(std::size_t in_channels, std::size_t out_channels, int stride, Rng& rng);

  Var<T> forward(const Var<T>& x);
  void collect(const std::string& prefix, ParamSet<T>& out);

  Conv2dLayer<T> conv;
  BatchNormLayer<T> bn;
};

}  // namespace fusenet::nd
