#include "skinnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"

namespace skinnet::ops {
namespace {

using std::size_t;

void require_rank(const Shape& s, size_t rank, const char* where) {
  if (s.size() != rank)
    fail(ErrorKind::kShape, std::string(where) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

// Rows of the patch matrix are (channel, ky, kx); columns are output pixels.
template <typename T>
void im2col(const T* image, size_t channels, size_t h, size_t w, T* col) {
  const size_t pixels = h * w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sr = 0; sr < static_cast<std::ptrdiff_t>(channels * 9); ++sr) {
    const auto r = static_cast<size_t>(sr);
    const size_t c = r / 9;
    const auto ky = static_cast<std::ptrdiff_t>((r % 9) / 3) - 1;
    const auto kx = static_cast<std::ptrdiff_t>(r % 3) - 1;
    const T* src = image + c * pixels;
    T* dst = col + r * pixels;
    for (size_t y = 0; y < h; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y) + ky;
      T* row = dst + y * w;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
        std::fill(row, row + w, T(0));
        continue;
      }
      const T* srow = src + static_cast<size_t>(sy) * w;
      for (size_t x = 0; x < w; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x) + kx;
        row[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? T(0) : srow[sx];
      }
    }
  }
}

template <typename T>
void col2im(const T* col, size_t channels, size_t h, size_t w, T* image) {
  const size_t pixels = h * w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sc = 0; sc < static_cast<std::ptrdiff_t>(channels); ++sc) {
    const auto c = static_cast<size_t>(sc);
    T* dst = image + c * pixels;
    std::fill(dst, dst + pixels, T(0));
    for (size_t k = 0; k < 9; ++k) {
      const auto ky = static_cast<std::ptrdiff_t>(k / 3) - 1;
      const auto kx = static_cast<std::ptrdiff_t>(k % 3) - 1;
      const T* src = col + (c * 9 + k) * pixels;
      for (size_t y = 0; y < h; ++y) {
        const auto sy = static_cast<std::ptrdiff_t>(y) + ky;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
        T* drow = dst + static_cast<size_t>(sy) * w;
        const T* srow = src + y * w;
        for (size_t x = 0; x < w; ++x) {
          const auto sx = static_cast<std::ptrdiff_t>(x) + kx;
          if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) drow[sx] += srow[x];
        }
      }
    }
  }
}

template <typename T>
void check_conv(const TensorT<T>& x, const ConvParams<T>& p, const char* where) {
  require_rank(x.shape(), 4, where);
  require_rank(p.kernel.shape(), 4, where);
  if (p.kernel.dim(2) != 3 || p.kernel.dim(3) != 3)
    fail(ErrorKind::kShape, std::string(where) + ": kernel must be 3x3, got " + shape_str(p.kernel.shape()));
  if (p.kernel.dim(1) != x.dim(1))
    fail(ErrorKind::kShape, std::string(where) + ": channel mismatch, input has " + std::to_string(x.dim(1)) +
                                " channels, kernel expects " + std::to_string(p.kernel.dim(1)));
  require_same_shape(p.bias.shape(), Shape{p.kernel.dim(0)}, where);
}

template <typename T>
void check_dense(const TensorT<T>& x, const DenseParams<T>& p, const char* where) {
  require_rank(x.shape(), 2, where);
  require_rank(p.weight.shape(), 2, where);
  if (p.weight.dim(1) != x.dim(1))
    fail(ErrorKind::kShape, std::string(where) + ": input width " + std::to_string(x.dim(1)) +
                                " does not match weight " + shape_str(p.weight.shape()));
  require_same_shape(p.bias.shape(), Shape{p.weight.dim(0)}, where);
}

}  // namespace

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  const T* in = x.ptr();
  T* o = out.ptr();
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& upstream) {
  require_same_shape(x.shape(), upstream.shape(), "relu_backward");
  TensorT<T> out(x.shape());
  const T* in = x.ptr();
  const T* g = upstream.ptr();
  T* o = out.ptr();
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? g[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& x) {
  require_finite(x, "softmax");
  const size_t width = x.shape().back();
  const size_t rows = x.size() / width;
  TensorT<T> out(x.shape());
  for (size_t r = 0; r < rows; ++r) {
    const T* in = x.ptr() + r * width;
    T* o = out.ptr() + r * width;
    const T mx = *std::max_element(in, in + width);
    T sum = 0;
    for (size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (size_t j = 0; j < width; ++j) o[j] /= sum;
  }
  return out;
}

template <typename T>
TensorT<T> softmax_backward(const TensorT<T>& probs, const TensorT<T>& upstream) {
  require_same_shape(probs.shape(), upstream.shape(), "softmax_backward");
  const size_t width = probs.shape().back();
  const size_t rows = probs.size() / width;
  TensorT<T> out(probs.shape());
  for (size_t r = 0; r < rows; ++r) {
    const T* p = probs.ptr() + r * width;
    const T* g = upstream.ptr() + r * width;
    T dot = 0;
    for (size_t j = 0; j < width; ++j) dot += g[j] * p[j];
    T* o = out.ptr() + r * width;
    for (size_t j = 0; j < width; ++j) o[j] = p[j] * (g[j] - dot);
  }
  return out;
}

namespace {

template <typename T>
void check_one_hot(const TensorT<T>& y, const TensorT<T>& yhat, const char* where) {
  require_same_shape(y.shape(), yhat.shape(), where);
  const size_t width = y.shape().back();
  const size_t rows = y.size() / width;
  for (size_t r = 0; r < rows; ++r) {
    size_t ones = 0;
    for (size_t j = 0; j < width; ++j) {
      const T v = y[r * width + j];
      if (v == T(1))
        ++ones;
      else if (v != T(0))
        ones = width + 1;
    }
    if (ones != 1) fail(ErrorKind::kShape, std::string(where) + ": row " + std::to_string(r) + " of y is not one-hot");
  }
}

template <typename T>
T clamp_probability(T v) {
  return std::clamp(v, static_cast<T>(kProbabilityFloor), T(1));
}

}  // namespace

template <typename T>
T cross_entropy(const TensorT<T>& y, const TensorT<T>& yhat) {
  check_one_hot(y, yhat, "cross_entropy");
  const size_t width = y.shape().back();
  const size_t rows = y.size() / width;
  T total = 0;
  for (size_t i = 0; i < y.size(); ++i)
    if (y[i] != T(0)) total -= y[i] * std::log(clamp_probability(yhat[i]));
  return total / static_cast<T>(rows);
}

template <typename T>
TensorT<T> cross_entropy_backward(const TensorT<T>& y, const TensorT<T>& yhat) {
  check_one_hot(y, yhat, "cross_entropy_backward");
  const size_t width = y.shape().back();
  const T rows = static_cast<T>(y.size() / width);
  TensorT<T> out(y.shape());
  for (size_t i = 0; i < y.size(); ++i) {
    const bool inside = yhat[i] >= static_cast<T>(kProbabilityFloor) && yhat[i] <= T(1);
    out[i] = (y[i] != T(0) && inside) ? -y[i] / (yhat[i] * rows) : T(0);
  }
  return out;
}

template <typename T>
TensorT<T> softmax_cross_entropy_backward(const TensorT<T>& probs, const TensorT<T>& y) {
  check_one_hot(y, probs, "softmax_cross_entropy_backward");
  const size_t width = y.shape().back();
  const T rows = static_cast<T>(y.size() / width);
  TensorT<T> out(y.shape());
  for (size_t i = 0; i < y.size(); ++i) out[i] = (probs[i] - y[i]) / rows;
  return out;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvParams<T>& p) {
  check_conv(x, p, "conv2d_forward");
  const size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const size_t cout = p.kernel.dim(0), pixels = h * w, k = cin * 9;
  TensorT<T> out(Shape{n, cout, h, w});
  std::vector<T> col(k * pixels);
  for (size_t b = 0; b < n; ++b) {
    im2col(x.ptr() + b * cin * pixels, cin, h, w, col.data());
    T* o = out.ptr() + b * cout * pixels;
    for (size_t c = 0; c < cout; ++c) std::fill(o + c * pixels, o + (c + 1) * pixels, p.bias[c]);
    detail::gemm_nn(cout, pixels, k, p.kernel.ptr(), col.data(), o, true);
  }
  require_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const ConvParams<T>& p, const TensorT<T>& upstream,
                             bool need_input_grad) {
  check_conv(x, p, "conv2d_backward");
  const size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const size_t cout = p.kernel.dim(0), pixels = h * w, k = cin * 9;
  require_same_shape(upstream.shape(), Shape{n, cout, h, w}, "conv2d_backward");

  ConvGrads<T> g{need_input_grad ? TensorT<T>(x.shape()) : TensorT<T>(), TensorT<T>(p.kernel.shape()),
                 TensorT<T>(p.bias.shape())};
  std::vector<T> col(k * pixels), col_t(k * pixels);
  for (size_t b = 0; b < n; ++b) {
    const T* up = upstream.ptr() + b * cout * pixels;
    for (size_t c = 0; c < cout; ++c) {
      T s = 0;
      for (size_t i = 0; i < pixels; ++i) s += up[c * pixels + i];
      g.bias[c] += s;
    }
    im2col(x.ptr() + b * cin * pixels, cin, h, w, col.data());
    detail::transpose(k, pixels, col.data(), col_t.data());
    detail::gemm_nn(cout, k, pixels, up, col_t.data(), g.kernel.ptr(), true);
    if (need_input_grad) {
      detail::gemm_tn(k, pixels, cout, p.kernel.ptr(), up, col.data(), false);
      col2im(col.data(), cin, h, w, g.input.ptr() + b * cin * pixels);
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const TensorT<T>& x) {
  require_rank(x.shape(), 4, "maxpool2x2_forward");
  const size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2)
    fail(ErrorKind::kShape, "maxpool2x2_forward: spatial dims must be >= 2, got " + shape_str(x.shape()));
  if (x.size() > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorKind::kShape, "maxpool2x2_forward: input too large for 32-bit indices");
  const size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{TensorT<T>(Shape{n, c, oh, ow}), PoolIndices{x.shape(), Shape{n, c, oh, ow}, {}}};
  r.indices.argmax.resize(r.output.size());
  const T* in = x.ptr();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sp = 0; sp < static_cast<std::ptrdiff_t>(n * c); ++sp) {
    const auto plane = static_cast<size_t>(sp);
    const size_t base = plane * h * w;
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        size_t best = base + 2 * oy * w + 2 * ox;
        const size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (size_t q : cand)
          if (in[q] > in[best]) best = q;
        const size_t o = (plane * oh + oy) * ow + ox;
        r.output[o] = in[best];
        r.indices.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
TensorT<T> maxpool2x2_backward(const PoolIndices& indices, const TensorT<T>& upstream) {
  require_same_shape(upstream.shape(), indices.output_shape, "maxpool2x2_backward");
  if (indices.argmax.size() != upstream.size())
    fail(ErrorKind::kShape, "maxpool2x2_backward: stale pooling indices");
  TensorT<T> grad(indices.input_shape);
  // Windows do not overlap, so each input element receives at most one value.
  for (size_t i = 0; i < upstream.size(); ++i) grad[indices.argmax[i]] += upstream[i];
  return grad;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const DenseParams<T>& p) {
  check_dense(x, p, "dense_forward");
  const size_t n = x.dim(0), in = x.dim(1), out = p.weight.dim(0);
  TensorT<T> y(Shape{n, out});
  detail::gemm_nt(n, out, in, x.ptr(), p.weight.ptr(), y.ptr(), false);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < out; ++j) y.at(i, j) += p.bias[j];
  require_finite(y, "dense_forward");
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& x, const DenseParams<T>& p, const TensorT<T>& upstream,
                             bool need_input_grad) {
  check_dense(x, p, "dense_backward");
  const size_t n = x.dim(0), in = x.dim(1), out = p.weight.dim(0);
  require_same_shape(upstream.shape(), Shape{n, out}, "dense_backward");
  DenseGrads<T> g{need_input_grad ? TensorT<T>(x.shape()) : TensorT<T>(), TensorT<T>(p.weight.shape()),
                  TensorT<T>(p.bias.shape())};
  detail::gemm_tn(out, in, n, upstream.ptr(), x.ptr(), g.weight.ptr(), false);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < out; ++j) g.bias[j] += upstream.at(i, j);
  if (need_input_grad) detail::gemm_nn(n, in, out, upstream.ptr(), p.weight.ptr(), g.input.ptr(), false);
  return g;
}

template <typename T>
DropoutResult<T> dropout(const TensorT<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::kConfig, "dropout: rate must lie in [0, 1)");
  if (mode == Mode::kEval) return {x, TensorT<T>()};
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResult<T> r{TensorT<T>(x.shape()), TensorT<T>(x.shape())};
  // Mask drawn serially so it depends only on the seed.
  for (size_t i = 0; i < x.size(); ++i) {
    const T m = rng.bernoulli(1.0 - rate) ? scale : T(0);
    r.mask[i] = m;
    r.output[i] = x[i] * m;
  }
  return r;
}

template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& mask, const TensorT<T>& upstream) {
  if (mask.empty()) return upstream;
  require_same_shape(mask.shape(), upstream.shape(), "dropout_backward");
  TensorT<T> out(upstream.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = upstream[i] * mask[i];
  return out;
}

#define SKINNET_INSTANTIATE_OPS(T)                                                                         \
  template TensorT<T> relu_forward(const TensorT<T>&);                                                     \
  template TensorT<T> relu_backward(const TensorT<T>&, const TensorT<T>&);                                 \
  template TensorT<T> softmax(const TensorT<T>&);                                                          \
  template TensorT<T> softmax_backward(const TensorT<T>&, const TensorT<T>&);                              \
  template T cross_entropy(const TensorT<T>&, const TensorT<T>&);                                          \
  template TensorT<T> cross_entropy_backward(const TensorT<T>&, const TensorT<T>&);                        \
  template TensorT<T> softmax_cross_entropy_backward(const TensorT<T>&, const TensorT<T>&);                \
  template TensorT<T> conv2d_forward(const TensorT<T>&, const ConvParams<T>&);                             \
  template ConvGrads<T> conv2d_backward(const TensorT<T>&, const ConvParams<T>&, const TensorT<T>&, bool); \
  template PoolResult<T> maxpool2x2_forward(const TensorT<T>&);                                            \
  template TensorT<T> maxpool2x2_backward(const PoolIndices&, const TensorT<T>&);                          \
  template TensorT<T> dense_forward(const TensorT<T>&, const DenseParams<T>&);                             \
  template DenseGrads<T> dense_backward(const TensorT<T>&, const DenseParams<T>&, const TensorT<T>&, bool); \
  template DropoutResult<T> dropout(const TensorT<T>&, double, Mode, Rng&);                                \
  template TensorT<T> dropout_backward(const TensorT<T>&, const TensorT<T>&);

SKINNET_INSTANTIATE_OPS(float)
SKINNET_INSTANTIATE_OPS(double)

}  // namespace skinnet::ops
