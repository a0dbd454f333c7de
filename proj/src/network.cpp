#include "skinnet/network.hpp"

#include <cmath>
#include <string>

namespace skinnet {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

std::string kernel_name(std::string_view layer) { return std::string(layer) + "/kernel"; }
std::string bias_name(std::string_view layer) { return std::string(layer) + "/bias"; }
bool is_base_layer(std::string_view layer) { return layer.starts_with("block"); }

template <typename T>
NetworkGraph<T> NetworkGraph<T>::build(const ArchConfig& config) {
  if (config.input_size < 32)
    fail(ErrorKind::kConfig, "input size must be at least 32 to survive five 2x2 poolings, got " +
                                 std::to_string(config.input_size));
  if (config.num_classes < 2) fail(ErrorKind::kConfig, "need at least 2 classes");
  if (config.width_divisor == 0 || kBlockWidths[0] % config.width_divisor != 0)
    fail(ErrorKind::kConfig, "width divisor must divide 64");
  if (config.input_channels == 0) fail(ErrorKind::kConfig, "need at least one input channel");

  NetworkGraph g;
  g.config_ = config;
  auto& L = g.layers_;
  std::size_t channels = config.input_channels;
  std::size_t side = config.input_size;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t width = kBlockWidths[b] / config.width_divisor;
    const std::string block = "block" + std::to_string(b + 1);
    for (std::size_t c = 0; c < kBlockDepths[b]; ++c) {
      const std::string name = block + "_conv" + std::to_string(c + 1);
      L.push_back({LayerKind::kConv3x3, name, channels, width, 0.0, false});
      L.push_back({LayerKind::kRelu, name + "_relu"});
      channels = width;
    }
    L.push_back({LayerKind::kMaxPool2x2, block + "_pool"});
    side /= 2;
  }
  g.flatten_width_ = channels * side * side;
  L.push_back({LayerKind::kFlatten, "flatten"});

  std::size_t units = g.flatten_width_;
  for (std::size_t d = 0; d < 2; ++d) {
    const std::size_t width = kHeadWidths[d] / config.width_divisor;
    const std::string name = "head_dense" + std::to_string(d + 1);
    L.push_back({LayerKind::kDense, name, units, width, 0.0, true});
    L.push_back({LayerKind::kRelu, name + "_relu"});
    L.push_back({LayerKind::kDropout, "head_dropout" + std::to_string(d + 1), 0, 0, config.dropout_rate});
    units = width;
  }
  L.push_back({LayerKind::kDense, "head_out", units, config.num_classes, 0.0, true});
  L.push_back({LayerKind::kSoftmax, "softmax"});

  g.layer_to_slot_.assign(L.size(), SIZE_MAX);
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!L[i].has_params()) continue;
    g.layer_to_slot_[i] = g.params_.size();
    if (L[i].kind == LayerKind::kConv3x3)
      g.params_.push_back({i, TensorT<T>(Shape{L[i].out, L[i].in, 3, 3}), TensorT<T>(Shape{L[i].out})});
    else
      g.params_.push_back({i, TensorT<T>(Shape{L[i].out, L[i].in}), TensorT<T>(Shape{L[i].out})});
  }
  return g;
}

template <typename T>
ParamSlot<T>& NetworkGraph<T>::param(std::string_view layer) {
  for (auto& p : params_)
    if (layers_[p.layer].name == layer) return p;
  fail(ErrorKind::kShape, "no parameterized layer named " + std::string(layer));
}

template <typename T>
const ParamSlot<T>& NetworkGraph<T>::param(std::string_view layer) const {
  return const_cast<NetworkGraph*>(this)->param(layer);
}

template <typename T>
std::size_t NetworkGraph<T>::slot_of_layer(std::size_t layer) const {
  return layer_to_slot_.at(layer);
}

template <typename T>
std::size_t NetworkGraph<T>::parameter_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    const auto& spec = layers_[p.layer];
    const bool base = spec.kind == LayerKind::kConv3x3;
    const bool counted = group == ParamGroup::kAll || (group == ParamGroup::kBase && base) ||
                         (group == ParamGroup::kHead && !base) || (group == ParamGroup::kTrainable && spec.trainable);
    if (counted) n += p.weight.size() + p.bias.size();
  }
  return n;
}

template <typename T>
void NetworkGraph<T>::set_trainable(bool freeze_base) {
  for (auto& l : layers_) {
    if (l.kind == LayerKind::kConv3x3) l.trainable = !freeze_base;
    if (l.kind == LayerKind::kDense) l.trainable = true;
  }
}

namespace {

template <typename T>
void fill_uniform(TensorT<T>& t, double limit, Rng& rng) {
  // Redraw the rare values that round onto the bound so the open interval holds.
  const T bound = static_cast<T>(limit);
  for (std::size_t i = 0; i < t.size(); ++i) {
    T v;
    do {
      v = static_cast<T>(rng.uniform(-limit, limit));
    } while (!(std::abs(v) < bound));
    t[i] = v;
  }
}

}  // namespace

template <typename T>
void NetworkGraph<T>::init_head(Rng& rng) {
  for (auto& p : params_) {
    const auto& spec = layers_[p.layer];
    if (spec.kind != LayerKind::kDense) continue;
    fill_uniform(p.weight, std::sqrt(6.0 / static_cast<double>(spec.in + spec.out)), rng);
    p.bias.fill(T(0));
  }
}

template <typename T>
void NetworkGraph<T>::init_base(Rng& rng) {
  for (auto& p : params_) {
    const auto& spec = layers_[p.layer];
    if (spec.kind != LayerKind::kConv3x3) continue;
    fill_uniform(p.weight, std::sqrt(6.0 / static_cast<double>(9 * spec.in)), rng);
    p.bias.fill(T(0));
  }
}

template <typename T>
TensorT<T> NetworkGraph<T>::forward(const TensorT<T>& batch, Mode mode, Rng* rng, GradTape<T>* tape) const {
  const Shape expected{batch.rank() == 4 ? batch.dim(0) : 0, config_.input_channels, config_.input_size,
                       config_.input_size};
  if (batch.rank() != 4 || batch.shape() != expected)
    fail(ErrorKind::kShape, "forward: expected input [n," + std::to_string(config_.input_channels) + "," +
                                std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                                "], got " + shape_str(batch.shape()));
  if (mode == Mode::kTrain && rng == nullptr) fail(ErrorKind::kConfig, "forward: train mode needs an rng");

  std::size_t record_from = layers_.size();
  if (tape != nullptr) {
    tape->clear();
    tape->graph_ = this;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].has_params() && layers_[i].trainable) {
        record_from = i;
        break;
      }
  }

  TensorT<T> x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    const bool record = i >= record_from;
    typename GradTape<T>::Entry entry{i, {}, {}, {}};
    switch (spec.kind) {
      case LayerKind::kConv3x3: {
        const auto& p = params_[slot_of_layer(i)];
        TensorT<T> y = ops::conv2d_forward(x, ConvParams<T>{p.weight, p.bias});
        if (record) entry.saved = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::kDense: {
        const auto& p = params_[slot_of_layer(i)];
        TensorT<T> y = ops::dense_forward(x, DenseParams<T>{p.weight, p.bias});
        if (record) entry.saved = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::kRelu: {
        TensorT<T> y = ops::relu_forward(x);
        if (record) entry.saved = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::kMaxPool2x2: {
        auto r = ops::maxpool2x2_forward(x);
        if (record) entry.pool = std::move(r.indices);
        x = std::move(r.output);
        break;
      }
      case LayerKind::kFlatten: {
        const std::size_t n = x.dim(0);
        if (record) entry.pool.input_shape = x.shape();
        x = std::move(x).reshaped(Shape{n, x.size() / n});
        break;
      }
      case LayerKind::kDropout: {
        auto r = ops::dropout(x, spec.rate, mode, *rng);
        if (record) entry.mask = std::move(r.mask);
        x = std::move(r.output);
        break;
      }
      case LayerKind::kSoftmax: {
        x = ops::softmax(x);
        if (record) entry.saved = x;
        break;
      }
    }
    if (record) tape->entries_.push_back(std::move(entry));
  }
  require_finite(x, "forward");
  return x;
}

template <typename T>
GradientStore<T> NetworkGraph<T>::backward(const GradTape<T>& tape, const TensorT<T>& probs_grad) const {
  return backward_impl(tape, probs_grad, false);
}

template <typename T>
GradientStore<T> NetworkGraph<T>::backward_from_logits(const GradTape<T>& tape, const TensorT<T>& logits_grad) const {
  return backward_impl(tape, logits_grad, true);
}

template <typename T>
GradientStore<T> NetworkGraph<T>::backward_impl(const GradTape<T>& tape, TensorT<T> grad, bool from_logits) const {
  GradientStore<T> store;
  if (tape.empty()) return store;
  if (tape.graph_ != this) fail(ErrorKind::kShape, "backward: tape was recorded on a different graph");
  const auto& entries = tape.entries();
  if (entries.back().layer != layers_.size() - 1)
    fail(ErrorKind::kShape, "backward: tape does not end at the output layer");

  for (std::size_t k = entries.size(); k-- > 0;) {
    const auto& e = entries[k];
    const auto& spec = layers_.at(e.layer);
    const bool need_input = k > 0;
    switch (spec.kind) {
      case LayerKind::kSoftmax:
        if (!from_logits) grad = ops::softmax_backward(e.saved, grad);
        break;
      case LayerKind::kDropout:
        grad = ops::dropout_backward(e.mask, grad);
        break;
      case LayerKind::kRelu:
        grad = ops::relu_backward(e.saved, grad);
        break;
      case LayerKind::kFlatten:
        grad = std::move(grad).reshaped(e.pool.input_shape);
        break;
      case LayerKind::kMaxPool2x2:
        grad = ops::maxpool2x2_backward(e.pool, grad);
        break;
      case LayerKind::kConv3x3: {
        const auto& p = params_[slot_of_layer(e.layer)];
        auto g = ops::conv2d_backward(e.saved, ConvParams<T>{p.weight, p.bias}, grad, need_input);
        if (spec.trainable) {
          store.emplace(kernel_name(spec.name), std::move(g.kernel));
          store.emplace(bias_name(spec.name), std::move(g.bias));
        }
        grad = std::move(g.input);
        break;
      }
      case LayerKind::kDense: {
        const auto& p = params_[slot_of_layer(e.layer)];
        auto g = ops::dense_backward(e.saved, DenseParams<T>{p.weight, p.bias}, grad, need_input);
        if (spec.trainable) {
          store.emplace(kernel_name(spec.name), std::move(g.weight));
          store.emplace(bias_name(spec.name), std::move(g.bias));
        }
        grad = std::move(g.input);
        break;
      }
    }
  }
  return store;
}

NetworkGraph<float> build_modified_vgg16(std::size_t num_classes, std::size_t input_size) {
  ArchConfig config;
  config.num_classes = num_classes;
  config.input_size = input_size;
  return NetworkGraph<float>::build(config);
}

template class NetworkGraph<float>;
template class NetworkGraph<double>;

}  // namespace skinnet
