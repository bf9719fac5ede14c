#include "fusenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"

namespace fusenet::nd {

namespace {

template <typename T>
Tensor<T>& grad_of(Node<T>& n, std::size_t parent) {
  return n.parents[parent]->grad_buffer();
}

template <typename T>
bool wants_grad(const Node<T>& n, std::size_t parent) {
  return parent < n.parents.size() && n.parents[parent]->requires_grad;
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
  if (s.size() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + arg + " must have rank " +
                                std::to_string(rank) + ", got " + shape_str(s));
  }
}

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, k, h_out, w_out;
  int stride, pad;
  std::size_t col_rows() const { return c_in * k * k; }
  std::size_t col_cols() const { return h_out * w_out; }
};

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          T* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.w_out, T(0));
            continue;
          }
          const T* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Extents of a tensor split around the channel axis.
struct ChannelLayout {
  std::size_t outer, channels, inner;
  std::size_t reduce_count() const { return outer * inner; }
};

ChannelLayout channel_layout(const Shape& s, const char* op) {
  if (s.size() < 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank >= 2, got " + shape_str(s));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  return {s[0], s[1], inner};
}

struct LerpTap {
  std::size_t lo, hi;
  double frac;
};

std::vector<LerpTap> upsample_taps(std::size_t in) {
  std::vector<LerpTap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int padding) {
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (ks[1] != xs[1]) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(xs[1]) +
                                " do not match kernel input channels " + std::to_string(ks[1]));
  }
  if (ks[2] != ks[3]) throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(ks));
  if (xs[2] % static_cast<std::size_t>(stride) != 0) {
    throw std::invalid_argument("conv2d: input height H=" + std::to_string(xs[2]) +
                                " not divisible by stride " + std::to_string(stride));
  }
  if (xs[3] % static_cast<std::size_t>(stride) != 0) {
    throw std::invalid_argument("conv2d: input width W=" + std::to_string(xs[3]) +
                                " not divisible by stride " + std::to_string(stride));
  }
  if (bias && (bias.shape().size() != 1 || bias.shape()[0] != ks[0])) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                " does not match output channels " + std::to_string(ks[0]));
  }
  ConvGeometry g{};
  g.batch = xs[0];
  g.c_in = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.c_out = ks[0];
  g.k = ks[2];
  g.stride = stride;
  g.pad = padding;
  const long span_h = static_cast<long>(g.h) + 2L * padding - static_cast<long>(g.k);
  const long span_w = static_cast<long>(g.w) + 2L * padding - static_cast<long>(g.k);
  if (span_h < 0 || span_w < 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  g.h_out = static_cast<std::size_t>(span_h / stride + 1);
  g.w_out = static_cast<std::size_t>(span_w / stride + 1);

  Tensor<T> out({g.batch, g.c_out, g.h_out, g.w_out});
  std::vector<T> col(g.col_rows() * g.col_cols());
  const std::size_t in_plane = g.c_in * g.h * g.w;
  const std::size_t out_plane = g.c_out * g.col_cols();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x.value().data() + n * in_plane, g, col.data());
    T* o = out.data() + n * out_plane;
    if (bias) {
      for (std::size_t co = 0; co < g.c_out; ++co) {
        std::fill(o + co * g.col_cols(), o + (co + 1) * g.col_cols(), bias.value()[co]);
      }
    }
    detail::gemm_nn(g.c_out, g.col_cols(), g.col_rows(), kernel.value().data(), col.data(), o);
  }

  std::vector<Var<T>> parents{x, kernel};
  if (bias) parents.push_back(bias);
  return Var<T>::make_result(std::move(out), std::move(parents), "conv2d", [g](Node<T>& node) {
    const Tensor<T>& xv = node.parents[0]->value;
    const Tensor<T>& kv = node.parents[1]->value;
    const Tensor<T>& go = node.grad;
    const std::size_t in_plane = g.c_in * g.h * g.w;
    const std::size_t out_plane = g.c_out * g.col_cols();
    std::vector<T> col(g.col_rows() * g.col_cols());
    std::vector<T> dcol(wants_grad(node, 0) ? col.size() : 0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* gn = go.data() + n * out_plane;
      if (wants_grad(node, 1)) {
        im2col(xv.data() + n * in_plane, g, col.data());
        detail::gemm_nt(g.c_out, g.col_rows(), g.col_cols(), gn, col.data(), grad_of(node, 1).data());
      }
      if (wants_grad(node, 2)) {
        T* db = grad_of(node, 2).data();
        for (std::size_t co = 0; co < g.c_out; ++co) {
          T acc = T(0);
          for (std::size_t i = 0; i < g.col_cols(); ++i) acc += gn[co * g.col_cols() + i];
          db[co] += acc;
        }
      }
      if (wants_grad(node, 0)) {
        std::fill(dcol.begin(), dcol.end(), T(0));
        detail::gemm_tn(g.col_rows(), g.col_cols(), g.c_out, kv.data(), gn, dcol.data());
        col2im_add(dcol.data(), g, grad_of(node, 0).data() + n * in_plane);
      }
    }
  });
}

template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                 Tensor<T>& running_var, bool training, T momentum, T eps) {
  const ChannelLayout L = channel_layout(x.shape(), "batchnorm");
  if (gamma.numel() != L.channels || beta.numel() != L.channels ||
      running_mean.numel() != L.channels || running_var.numel() != L.channels) {
    throw std::invalid_argument("batchnorm: channel extent " + std::to_string(L.channels) +
                                " does not match layer parameters of size " +
                                std::to_string(gamma.numel()));
  }
  const std::size_t m = L.reduce_count();
  if (m == 0) throw std::invalid_argument("batchnorm: zero-size batch");

  std::vector<T> mean(L.channels), inv_std(L.channels);
  const T* xd = x.value().data();
  if (training) {
    for (std::size_t c = 0; c < L.channels; ++c) {
      double s = 0;
      for (std::size_t o = 0; o < L.outer; ++o) {
        const T* p = xd + (o * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0;
      for (std::size_t o = 0; o < L.outer; ++o) {
        const T* p = xd + (o * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < L.channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < L.outer; ++o) {
    for (std::size_t c = 0; c < L.channels; ++c) {
      const std::size_t base = (o * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const T h = (xd[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = gamma.value()[c] * h + beta.value()[c];
      }
    }
  }

  return Var<T>::make_result(
      std::move(out), {x, gamma, beta}, "batchnorm",
      [L, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& node) {
        const Tensor<T>& go = node.grad;
        const Tensor<T>& gam = node.parents[1]->value;
        std::vector<double> sum_g(L.channels, 0.0), sum_gx(L.channels, 0.0);
        for (std::size_t o = 0; o < L.outer; ++o) {
          for (std::size_t c = 0; c < L.channels; ++c) {
            const std::size_t base = (o * L.channels + c) * L.inner;
            for (std::size_t i = 0; i < L.inner; ++i) {
              sum_g[c] += go[base + i];
              sum_gx[c] += static_cast<double>(go[base + i]) * xhat[base + i];
            }
          }
        }
        if (wants_grad(node, 1)) {
          Tensor<T>& dg = grad_of(node, 1);
          for (std::size_t c = 0; c < L.channels; ++c) dg[c] += static_cast<T>(sum_gx[c]);
        }
        if (wants_grad(node, 2)) {
          Tensor<T>& db = grad_of(node, 2);
          for (std::size_t c = 0; c < L.channels; ++c) db[c] += static_cast<T>(sum_g[c]);
        }
        if (!wants_grad(node, 0)) return;
        Tensor<T>& dx = grad_of(node, 0);
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t o = 0; o < L.outer; ++o) {
          for (std::size_t c = 0; c < L.channels; ++c) {
            const std::size_t base = (o * L.channels + c) * L.inner;
            const double k = static_cast<double>(gam[c]) * inv_std[c];
            for (std::size_t i = 0; i < L.inner; ++i) {
              if (training) {
                dx[base + i] += static_cast<T>(
                    k * (go[base + i] - inv_m * sum_g[c] - inv_m * xhat[base + i] * sum_gx[c]));
              } else {
                dx[base + i] += static_cast<T>(k * go[base + i]);
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xd = x.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  return Var<T>::make_result(std::move(out), {x}, "relu", [](Node<T>& node) {
    const Tensor<T>& xv = node.parents[0]->value;
    Tensor<T>& dx = grad_of(node, 0);
    for (std::size_t i = 0; i < dx.numel(); ++i) {
      if (xv[i] > T(0)) dx[i] += node.grad[i];
    }
  });
}

template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample2x_bilinear", "input");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  if (h == 0 || w == 0) throw std::invalid_argument("upsample2x_bilinear: empty spatial extent");
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  Tensor<T> out({s[0], s[1], 2 * h, 2 * w});
  const T* xd = x.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = xd + p * h * w;
    T* o = out.data() + p * 4 * h * w;
    for (std::size_t oy = 0; oy < 2 * h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        const auto& b = tx[ox];
        const double top = (1 - b.frac) * in[a.lo * w + b.lo] + b.frac * in[a.lo * w + b.hi];
        const double bot = (1 - b.frac) * in[a.hi * w + b.lo] + b.frac * in[a.hi * w + b.hi];
        o[oy * 2 * w + ox] = static_cast<T>((1 - a.frac) * top + a.frac * bot);
      }
    }
  }
  return Var<T>::make_result(std::move(out), {x}, "upsample2x_bilinear",
                             [planes, h, w, ty, tx](Node<T>& node) {
                               Tensor<T>& dx = grad_of(node, 0);
                               for (std::size_t p = 0; p < planes; ++p) {
                                 T* d = dx.data() + p * h * w;
                                 const T* g = node.grad.data() + p * 4 * h * w;
                                 for (std::size_t oy = 0; oy < 2 * h; ++oy) {
                                   const auto& a = ty[oy];
                                   for (std::size_t ox = 0; ox < 2 * w; ++ox) {
                                     const auto& b = tx[ox];
                                     const double go = g[oy * 2 * w + ox];
                                     d[a.lo * w + b.lo] += static_cast<T>(go * (1 - a.frac) * (1 - b.frac));
                                     d[a.lo * w + b.hi] += static_cast<T>(go * (1 - a.frac) * b.frac);
                                     d[a.hi * w + b.lo] += static_cast<T>(go * a.frac * (1 - b.frac));
                                     d[a.hi * w + b.hi] += static_cast<T>(go * a.frac * b.frac);
                                   }
                                 }
                               }
                             });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::size_t m = x.shape()[0], d_in = x.shape()[1], d_out = weight.shape()[0];
  if (weight.shape()[1] != d_in) {
    throw std::invalid_argument("linear: input width " + std::to_string(d_in) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  if (bias && bias.numel() != d_out) {
    throw std::invalid_argument("linear: bias length " + std::to_string(bias.numel()) +
                                " does not match output width " + std::to_string(d_out));
  }
  Tensor<T> out({m, d_out});
  if (bias) {
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(bias.value().data(), bias.value().data() + d_out, out.data() + i * d_out);
    }
  }
  detail::gemm_nt(m, d_out, d_in, x.value().data(), weight.value().data(), out.data());
  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return Var<T>::make_result(std::move(out), std::move(parents), "linear", [m, d_in, d_out](Node<T>& node) {
    const T* g = node.grad.data();
    if (wants_grad(node, 0)) {
      detail::gemm_nn(m, d_in, d_out, g, node.parents[1]->value.data(), grad_of(node, 0).data());
    }
    if (wants_grad(node, 1)) {
      detail::gemm_tn(d_out, d_in, m, g, node.parents[0]->value.data(), grad_of(node, 1).data());
    }
    if (wants_grad(node, 2)) {
      T* db = grad_of(node, 2).data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d_out; ++j) db[j] += g[i * d_out + j];
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Var<T>::make_result(std::move(out), {a, b}, "add", [](Node<T>& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants_grad(node, p)) continue;
      Tensor<T>& d = grad_of(node, p);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += node.grad[i];
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const ChannelLayout la = channel_layout(a.shape(), "concat_channels");
  const ChannelLayout lb = channel_layout(b.shape(), "concat_channels");
  Shape sa = a.shape(), sb = b.shape();
  sa[1] = sb[1] = 0;
  if (sa != sb) {
    throw std::invalid_argument("concat_channels: non-channel extents differ " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Shape so = a.shape();
  so[1] = la.channels + lb.channels;
  Tensor<T> out(so);
  const std::size_t ca = la.channels * la.inner, cb = lb.channels * lb.inner;
  for (std::size_t o = 0; o < la.outer; ++o) {
    T* dst = out.data() + o * (ca + cb);
    std::copy(a.value().data() + o * ca, a.value().data() + (o + 1) * ca, dst);
    std::copy(b.value().data() + o * cb, b.value().data() + (o + 1) * cb, dst + ca);
  }
  return Var<T>::make_result(std::move(out), {a, b}, "concat_channels", [la, ca, cb](Node<T>& node) {
    const T* g = node.grad.data();
    for (std::size_t o = 0; o < la.outer; ++o) {
      const T* src = g + o * (ca + cb);
      if (wants_grad(node, 0)) {
        T* d = grad_of(node, 0).data() + o * ca;
        for (std::size_t i = 0; i < ca; ++i) d[i] += src[i];
      }
      if (wants_grad(node, 1)) {
        T* d = grad_of(node, 1).data() + o * cb;
        for (std::size_t i = 0; i < cb; ++i) d[i] += src[ca + i];
      }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return Var<T>::make_result(std::move(out), {a, b}, "mul", [](Node<T>& node) {
    const Tensor<T>& av = node.parents[0]->value;
    const Tensor<T>& bv = node.parents[1]->value;
    if (wants_grad(node, 0)) {
      Tensor<T>& d = grad_of(node, 0);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += node.grad[i] * bv[i];
    }
    if (wants_grad(node, 1)) {
      Tensor<T>& d = grad_of(node, 1);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += node.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  return Var<T>::make_result(std::move(out), {x}, "scale", [factor](Node<T>& node) {
    Tensor<T>& d = grad_of(node, 0);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += node.grad[i] * factor;
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().storage()) acc += v;
  Tensor<T> out({1}, static_cast<T>(acc));
  return Var<T>::make_result(std::move(out), {x}, "sum", [](Node<T>& node) {
    Tensor<T>& d = grad_of(node, 0);
    const T g = node.grad[0];
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += g;
  });
}

template <typename T>
Var<T> dot_constant(const Var<T>& x, const Tensor<T>& weights) {
  require_same_shape(x.shape(), weights.shape(), "dot_constant");
  double acc = 0;
  for (std::size_t i = 0; i < weights.numel(); ++i) acc += static_cast<double>(x.value()[i]) * weights[i];
  Tensor<T> out({1}, static_cast<T>(acc));
  return Var<T>::make_result(std::move(out), {x}, "dot_constant", [weights](Node<T>& node) {
    Tensor<T>& d = grad_of(node, 0);
    const T g = node.grad[0];
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += g * weights[i];
  });
}

#define FUSENET_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                  \
  template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, \
                            bool, T, T);                                                          \
  template Var<T> relu(const Var<T>&);                                                            \
  template Var<T> upsample2x_bilinear(const Var<T>&);                                             \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                              \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> scale(const Var<T>&, T);                                                        \
  template Var<T> sum(const Var<T>&);                                                             \
  template Var<T> dot_constant(const Var<T>&, const Tensor<T>&);

FUSENET_INSTANTIATE_OPS(float)
FUSENET_INSTANTIATE_OPS(double)

}  // namespace fusenet::nd
