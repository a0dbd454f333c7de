#pragma once

// Test-only helpers: central finite differences and random tensors.

#include <algorithm>
#include <cmath>
#include <functional>

#include "skinnet/rng.hpp"
#include "skinnet/tensor.hpp"

namespace skinnet::testing {

template <typename T>
TensorT<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// d f / d x by central differences, one coordinate at a time.
inline TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, TensorD x, double h) {
  TensorD g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Elementwise relative error; `floor` guards the denominator for near-zero gradients.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const TensorD& a, const TensorD& b, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

/// sum(w * y): turns a tensor-valued map into a scalar objective whose
/// gradient w.r.t. y is exactly w.
inline double weighted_sum(const TensorD& y, const TensorD& w) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace skinnet::testing
