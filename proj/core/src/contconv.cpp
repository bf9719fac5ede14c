#include "fusenet/contconv.hpp"

#include <string>

#include "fusenet/ops.hpp"

namespace fusenet::contconv {

template <typename T>
nd::Var<T> neighbor_aggregate(const nd::Var<T>& weights, const nd::Var<T>& features,
                              const neighbors::NeighborTable& table) {
  const nd::Shape& fs = features.shape();
  const nd::Shape& ws = weights.shape();
  if (fs.size() != 2) throw std::invalid_argument("neighbor_aggregate: features must be [N, C]");
  const std::size_t n = fs[0], c = fs[1], k = table.k;
  if (table.rows != n) {
    throw std::invalid_argument("neighbor_aggregate: table has " + std::to_string(table.rows) +
                                " rows but features have " + std::to_string(n));
  }
  if (ws.size() != 2 || ws[0] != n * k || ws[1] != c) {
    throw std::invalid_argument("neighbor_aggregate: weights " + nd::shape_str(ws) + " expected [" +
                                std::to_string(n * k) + "," + std::to_string(c) + "]");
  }
  nd::Tensor<T> out({n, c});
  const T* w = weights.value().data();
  const T* f = features.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const T* wr = w + (i * k + j) * c;
      const T* fr = f + static_cast<std::size_t>(table.indices[i * k + j]) * c;
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] += wr[ch] * fr[ch];
    }
  }
  // The table is captured by value: it must outlive the graph, and tables are small.
  return nd::Var<T>::make_result(
      std::move(out), {weights, features}, "neighbor_aggregate", [n, c, k, idx = table.indices](nd::Node<T>& node) {
        const T* g = node.grad.data();
        const T* w = node.parents[0]->value.data();
        const T* f = node.parents[1]->value.data();
        T* dw = node.parents[0]->requires_grad ? node.parents[0]->grad_buffer().data() : nullptr;
        T* df = node.parents[1]->requires_grad ? node.parents[1]->grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          const T* gi = g + i * c;
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t row = i * k + j;
            const std::size_t src = static_cast<std::size_t>(idx[row]) * c;
            if (dw) {
              for (std::size_t ch = 0; ch < c; ++ch) dw[row * c + ch] += gi[ch] * f[src + ch];
            }
            if (df) {
              for (std::size_t ch = 0; ch < c; ++ch) df[src + ch] += gi[ch] * w[row * c + ch];
            }
          }
        }
      });
}

template <typename T>
nd::Tensor<T> offsets_tensor(const neighbors::NeighborTable& table) {
  nd::Tensor<T> t({table.rows * table.k, 3});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(table.offsets[i]);
  return t;
}

template <typename T>
ContConvLayer<T>::ContConvLayer(std::size_t in_width, std::size_t out_width, Rng& rng)
    : mlp_hidden(3, in_width / 2, true, rng),
      mlp_out(in_width / 2, in_width, true, rng),
      transform(in_width, out_width, false, rng),
      bn(out_width) {
  if (in_width == 0 || in_width % 2 != 0) {
    throw std::invalid_argument("ContConvLayer: input width must be even and positive, got " +
                                std::to_string(in_width));
  }
}

template <typename T>
nd::Var<T> ContConvLayer<T>::forward_raw(const nd::Var<T>& features, const neighbors::NeighborTable& table) const {
  if (features.shape().size() != 2 || features.shape()[1] != in_width()) {
    throw std::invalid_argument("ContConvLayer: feature width " +
                                (features.shape().size() == 2 ? std::to_string(features.shape()[1])
                                                              : nd::shape_str(features.shape())) +
                                " does not match layer width " + std::to_string(in_width()));
  }
  const auto offsets = nd::Var<T>::constant(offsets_tensor<T>(table));
  const auto hidden = nd::relu(mlp_hidden.forward(offsets));
  const auto weights = mlp_out.forward(hidden);
  return transform.forward(neighbor_aggregate(weights, features, table));
}

template <typename T>
nd::Var<T> ContConvLayer<T>::forward(const nd::Var<T>& features, const neighbors::NeighborTable& table) {
  return nd::relu(bn.forward(forward_raw(features, table)));
}

template <typename T>
void ContConvLayer<T>::collect(const std::string& prefix, nd::ParamSet<T>& out) {
  mlp_hidden.collect(prefix + ".mlp_hidden", out);
  mlp_out.collect(prefix + ".mlp_out", out);
  transform.collect(prefix + ".transform", out);
  bn.collect(prefix + ".bn", out);
}

template nd::Var<float> neighbor_aggregate(const nd::Var<float>&, const nd::Var<float>&,
                                           const neighbors::NeighborTable&);
template nd::Var<double> neighbor_aggregate(const nd::Var<double>&, const nd::Var<double>&,
                                            const neighbors::NeighborTable&);
template nd::Tensor<float> offsets_tensor<float>(const neighbors::NeighborTable&);
template nd::Tensor<double> offsets_tensor<double>(const neighbors::NeighborTable&);
template class ContConvLayer<float>;
template class ContConvLayer<double>;

}  // namespace fusenet::contconv
