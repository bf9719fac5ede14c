#include "fusenet/layers.hpp"

#include <cmath>

#include "fusenet/ops.hpp"

namespace fusenet::nd {

template <typename T>
void ParamSet<T>::set_training(bool on) {
  for (auto* n : norms) n->training = on;
}

template <typename T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<T>(uniform(rng, -bound, bound));
  return t;
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                            int stride_, bool with_bias, Rng& rng)
    : stride(stride_), padding(static_cast<int>(kernel_size - 1) / 2) {
  if (kernel_size % 2 == 0) throw std::invalid_argument("Conv2dLayer: kernel size must be odd");
  if (stride_ < 1) throw std::invalid_argument("Conv2dLayer: stride must be positive");
  const std::size_t fan_in = in_channels * kernel_size * kernel_size;
  kernel = Var<T>::parameter(
      fan_in_uniform<T>({out_channels, in_channels, kernel_size, kernel_size}, fan_in, rng));
  if (with_bias) bias = Var<T>::parameter(fan_in_uniform<T>({out_channels}, fan_in, rng));
}

template <typename T>
Var<T> Conv2dLayer<T>::forward(const Var<T>& x) const {
  return conv2d(x, kernel, bias, stride, padding);
}

template <typename T>
void Conv2dLayer<T>::collect(const std::string& prefix, ParamSet<T>& out) {
  out.params.push_back({prefix + ".weight", kernel});
  if (bias) out.params.push_back({prefix + ".bias", bias});
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels)
    : gamma(Var<T>::parameter(Tensor<T>({channels}, T(1)))),
      beta(Var<T>::parameter(Tensor<T>({channels}, T(0)))),
      running_mean({channels}, T(0)),
      running_var({channels}, T(1)) {}

template <typename T>
Var<T> BatchNormLayer<T>::forward(const Var<T>& x) {
  return batchnorm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
}

template <typename T>
void BatchNormLayer<T>::collect(const std::string& prefix, ParamSet<T>& out) {
  out.params.push_back({prefix + ".gamma", gamma});
  out.params.push_back({prefix + ".beta", beta});
  out.buffers.push_back({prefix + ".running_mean", &running_mean});
  out.buffers.push_back({prefix + ".running_var", &running_var});
  out.norms.push_back(this);
}

template <typename T>
LinearLayer<T>::LinearLayer(std::size_t in_features, std::size_t out_features, bool with_bias, Rng& rng)
    : weight(Var<T>::parameter(fan_in_uniform<T>({out_features, in_features}, in_features, rng))) {
  if (with_bias) bias = Var<T>::parameter(fan_in_uniform<T>({out_features}, in_features, rng));
}

template <typename T>
Var<T> LinearLayer<T>::forward(const Var<T>& x) const {
  return linear(x, weight, bias);
}

template <typename T>
void LinearLayer<T>::collect(const std::string& prefix, ParamSet<T>& out) {
  out.params.push_back({prefix + ".weight", weight});
  if (bias) out.params.push_back({prefix + ".bias", bias});
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::size_t in_channels, std::size_t out_channels, int stride, Rng& rng)
    : conv(in_channels, out_channels, 3, stride, true, rng), bn(out_channels) {}

template <typename T>
Var<T> ConvBnRelu<T>::forward(const Var<T>& x) {
  return relu(bn.forward(conv.forward(x)));
}

template <typename T>
void ConvBnRelu<T>::collect(const std::string& prefix, ParamSet<T>& out) {
  conv.collect(prefix + ".conv", out);
  bn.collect(prefix + ".bn", out);
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template Tensor<float> fan_in_uniform<float>(Shape, std::size_t, Rng&);
template Tensor<double> fan_in_uniform<double>(Shape, std::size_t, Rng&);
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class LinearLayer<float>;
template class LinearLayer<double>;
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;

}  // namespace fusenet::nd
