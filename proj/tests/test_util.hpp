#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "fusenet/autograd.hpp"
#include "fusenet/rng.hpp"

namespace fusenet::testing {

inline nd::Tensor<double> random_tensor(nd::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nd::Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = uniform(rng, lo, hi);
  return t;
}

/// Max relative error between d(f)/d(x) from backward and central differences.
inline double max_fd_error(nd::Var<double> x, const std::function<nd::Var<double>()>& f, double h = 1e-6) {
  x.zero_grad();
  nd::backward(f());
  const nd::Tensor<double> analytic = x.grad();
  nd::NoGradGuard guard;
  double worst = 0;
  auto& v = x.mutable_value();
  for (std::size_t i = 0; i < v.numel(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f().value()[0];
    v[i] = orig - h;
    const double fm = f().value()[0];
    v[i] = orig;
    const double n = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(n - analytic[i]) / std::max({std::abs(n), std::abs(analytic[i]), 1e-4}));
  }
  return worst;
}

}  // namespace fusenet::testing
