#include <string>

#include "skinnet/ops.hpp"

namespace skinnet::reference {

using std::size_t;

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvParams<T>& p) {
  const size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = p.kernel.dim(0);
  if (p.kernel.dim(1) != cin) fail(ErrorKind::kShape, "reference::conv2d_forward: channel mismatch");
  TensorT<T> out(Shape{n, cout, h, w});
  for (size_t b = 0; b < n; ++b)
    for (size_t o = 0; o < cout; ++o)
      for (size_t y = 0; y < h; ++y)
        for (size_t xx = 0; xx < w; ++xx) {
          T s = p.bias[o];
          for (size_t c = 0; c < cin; ++c)
            for (size_t ky = 0; ky < 3; ++ky)
              for (size_t kx = 0; kx < 3; ++kx) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w))
                  continue;
                s += x.at(b, c, static_cast<size_t>(sy), static_cast<size_t>(sx)) * p.kernel.at(o, c, ky, kx);
              }
          out.at(b, o, y, xx) = s;
        }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const ConvParams<T>& p, const TensorT<T>& upstream) {
  const size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = p.kernel.dim(0);
  ConvGrads<T> g{TensorT<T>(x.shape()), TensorT<T>(p.kernel.shape()), TensorT<T>(p.bias.shape())};
  for (size_t b = 0; b < n; ++b)
    for (size_t o = 0; o < cout; ++o)
      for (size_t y = 0; y < h; ++y)
        for (size_t xx = 0; xx < w; ++xx) {
          const T u = upstream.at(b, o, y, xx);
          g.bias[o] += u;
          for (size_t c = 0; c < cin; ++c)
            for (size_t ky = 0; ky < 3; ++ky)
              for (size_t kx = 0; kx < 3; ++kx) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w))
                  continue;
                const auto iy = static_cast<size_t>(sy), ix = static_cast<size_t>(sx);
                g.kernel.at(o, c, ky, kx) += u * x.at(b, c, iy, ix);
                g.input.at(b, c, iy, ix) += u * p.kernel.at(o, c, ky, kx);
              }
        }
  return g;
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const TensorT<T>& x) {
  const size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  PoolResult<T> r{TensorT<T>(Shape{n, c, oh, ow}), PoolIndices{x.shape(), Shape{n, c, oh, ow}, {}}};
  for (size_t b = 0; b < n; ++b)
    for (size_t ch = 0; ch < c; ++ch)
      for (size_t y = 0; y < oh; ++y)
        for (size_t xx = 0; xx < ow; ++xx) {
          size_t by = 2 * y, bx = 2 * xx;
          for (size_t dy = 0; dy < 2; ++dy)
            for (size_t dx = 0; dx < 2; ++dx)
              if (x.at(b, ch, 2 * y + dy, 2 * xx + dx) > x.at(b, ch, by, bx)) {
                by = 2 * y + dy;
                bx = 2 * xx + dx;
              }
          r.output.at(b, ch, y, xx) = x.at(b, ch, by, bx);
          r.indices.argmax.push_back(static_cast<std::uint32_t>(((b * c + ch) * h + by) * w + bx));
        }
  return r;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const DenseParams<T>& p) {
  const size_t n = x.dim(0), in = x.dim(1), out = p.weight.dim(0);
  if (p.weight.dim(1) != in) fail(ErrorKind::kShape, "reference::dense_forward: dimension mismatch");
  TensorT<T> y(Shape{n, out});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < out; ++j) {
      T s = p.bias[j];
      for (size_t k = 0; k < in; ++k) s += x.at(i, k) * p.weight.at(j, k);
      y.at(i, j) = s;
    }
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& x, const DenseParams<T>& p, const TensorT<T>& upstream) {
  const size_t n = x.dim(0), in = x.dim(1), out = p.weight.dim(0);
  DenseGrads<T> g{TensorT<T>(x.shape()), TensorT<T>(p.weight.shape()), TensorT<T>(p.bias.shape())};
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < out; ++j) {
      const T u = upstream.at(i, j);
      g.bias[j] += u;
      for (size_t k = 0; k < in; ++k) {
        g.weight.at(j, k) += u * x.at(i, k);
        g.input.at(i, k) += u * p.weight.at(j, k);
      }
    }
  return g;
}

#define SKINNET_INSTANTIATE_REFERENCE(T)                                                                     \
  template TensorT<T> conv2d_forward(const TensorT<T>&, const ConvParams<T>&);                               \
  template ConvGrads<T> conv2d_backward(const TensorT<T>&, const ConvParams<T>&, const TensorT<T>&);         \
  template PoolResult<T> maxpool2x2_forward(const TensorT<T>&);                                              \
  template TensorT<T> dense_forward(const TensorT<T>&, const DenseParams<T>&);                               \
  template DenseGrads<T> dense_backward(const TensorT<T>&, const DenseParams<T>&, const TensorT<T>&);

SKINNET_INSTANTIATE_REFERENCE(float)
SKINNET_INSTANTIATE_REFERENCE(double)

}  // namespace skinnet::reference
