#pragma once

#include <cstdint>
#include <vector>

#include "skinnet/rng.hpp"
#include "skinnet/tensor.hpp"

namespace skinnet {

enum class Mode { kTrain, kEval };

/// Lower clamp applied to predicted probabilities before taking the log.
inline constexpr double kProbabilityFloor = 1e-7;

/// 3x3 convolution, stride 1, padding 1. kernel is [out, in, 3, 3].
template <typename T>
struct ConvParams {
  TensorT<T> kernel;
  TensorT<T> bias;
};

template <typename T>
struct ConvGrads {
  TensorT<T> input;
  TensorT<T> kernel;
  TensorT<T> bias;
};

/// Fully connected layer, weight is [out, in].
template <typename T>
struct DenseParams {
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
struct DenseGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

/// Flat input offsets of each pooled maximum, kept for the backward pass.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct PoolResult {
  TensorT<T> output;
  PoolIndices indices;
};

/// `mask` holds 0 for dropped elements and 1/(1-rate) for kept ones; it is
/// empty in eval mode.
template <typename T>
struct DropoutResult {
  TensorT<T> output;
  TensorT<T> mask;
};

// OpenMP-parallel kernels. Every output element is produced by exactly one
// iteration with a fixed summation order, so results do not depend on the
// thread count.
namespace ops {

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x);
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& upstream);

/// Softmax over the last axis with max subtraction.
template <typename T>
TensorT<T> softmax(const TensorT<T>& x);
/// Vector-Jacobian product of softmax given its output `probs`.
template <typename T>
TensorT<T> softmax_backward(const TensorT<T>& probs, const TensorT<T>& upstream);

/// Categorical cross-entropy, mean over rows. `y` must be one-hot per row;
/// `yhat` is clamped to [kProbabilityFloor, 1] before the log.
template <typename T>
T cross_entropy(const TensorT<T>& y, const TensorT<T>& yhat);
/// d(cross_entropy)/d(yhat); zero where the clamp is active.
template <typename T>
TensorT<T> cross_entropy_backward(const TensorT<T>& y, const TensorT<T>& yhat);
/// Gradient of mean cross-entropy w.r.t. the logits feeding a softmax:
/// (probs - y) / rows.
template <typename T>
TensorT<T> softmax_cross_entropy_backward(const TensorT<T>& probs, const TensorT<T>& y);

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvParams<T>& p);
/// Skips the input gradient when `need_input_grad` is false (first layer).
template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const ConvParams<T>& p, const TensorT<T>& upstream,
                             bool need_input_grad = true);

/// 2x2 window, stride 2, floor semantics on odd sizes. Ties go to the first
/// element in row-major window order.
template <typename T>
PoolResult<T> maxpool2x2_forward(const TensorT<T>& x);
template <typename T>
TensorT<T> maxpool2x2_backward(const PoolIndices& indices, const TensorT<T>& upstream);

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const DenseParams<T>& p);
template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& x, const DenseParams<T>& p, const TensorT<T>& upstream,
                             bool need_input_grad = true);

/// Inverted dropout. Eval mode returns the input unchanged.
template <typename T>
DropoutResult<T> dropout(const TensorT<T>& x, double rate, Mode mode, Rng& rng);
template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& mask, const TensorT<T>& upstream);

}  // namespace ops

// Serial direct-loop kernels. Slow, obviously correct; used as test oracles
// and as the baseline in the benchmark.
namespace reference {

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvParams<T>& p);
template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const ConvParams<T>& p, const TensorT<T>& upstream);
template <typename T>
PoolResult<T> maxpool2x2_forward(const TensorT<T>& x);
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const DenseParams<T>& p);
template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& x, const DenseParams<T>& p, const TensorT<T>& upstream);

}  // namespace reference

}  // namespace skinnet
