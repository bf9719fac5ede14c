#pragma once

#include "fusenet/layers.hpp"
#include "fusenet/neighbors.hpp"

namespace fusenet::contconv {

/// out[i, c] = sum_k weights[i*K + k, c] * features[idx[i][k], c]
/// Backward scatter-adds once per (i, k) pair into the neighbor's feature row.
template <typename T>
nd::Var<T> neighbor_aggregate(const nd::Var<T>& weights, const nd::Var<T>& features,
                              const neighbors::NeighborTable& table);

/// Table offsets as a constant [rows*K, 3] tensor.
template <typename T>
nd::Tensor<T> offsets_tensor(const neighbors::NeighborTable& table);

/// Point-set convolution whose per-neighbor, per-channel weights come from a
/// two-layer MLP of the 3-D offset, followed by a bias-free linear transform:
///
///   h_i = W( sum_k MLP(x_i - x_k) (*) f_k )
///
/// then batch norm over the point axis and ReLU. The MLP is 3 -> in/2 -> in
/// with a ReLU between its layers and none at the end.
template <typename T>
class ContConvLayer {
 public:
  ContConvLayer(std::size_t in_width, std::size_t out_width, Rng& rng);

  /// Full layer: BN(point axis) + ReLU after the aggregation.
  nd::Var<T> forward(const nd::Var<T>& features, const neighbors::NeighborTable& table);
  /// Aggregation and transform only, no normalization or activation.
  nd::Var<T> forward_raw(const nd::Var<T>& features, const neighbors::NeighborTable& table) const;

  void collect(const std::string& prefix, nd::ParamSet<T>& out);

  std::size_t in_width() const { return mlp_out.out_features(); }
  std::size_t out_width() const { return transform.out_features(); }

  nd::LinearLayer<T> mlp_hidden;
  nd::LinearLayer<T> mlp_out;
  nd::LinearLayer<T> transform;
  nd::BatchNormLayer<T> bn;
};

}  // namespace fusenet::contconv
