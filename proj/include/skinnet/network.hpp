#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skinnet/ops.hpp"

namespace skinnet {

enum class LayerKind { kConv3x3, kRelu, kMaxPool2x2, kFlatten, kDense, kDropout, kSoftmax };

const char* to_string(LayerKind kind);

/// One entry of the declarative layer list. Conv layers are always 3x3
/// stride 1 padding 1 and pools 2x2 stride 2, so neither carries geometry.
struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t in = 0;   // input channels (conv) or units (dense)
  std::size_t out = 0;  // output channels (conv) or units (dense)
  double rate = 0.0;    // dropout only
  bool trainable = false;

  bool has_params() const noexcept { return kind == LayerKind::kConv3x3 || kind == LayerKind::kDense; }
};

struct ArchConfig {
  std::size_t num_classes = 3;
  std::size_t input_size = 150;
  std::size_t input_channels = 3;
  /// Divides every conv width and both hidden head widths. 1 is the real
  /// network; 8 gives the small same-topology variant used in tests.
  std::size_t width_divisor = 1;
  double dropout_rate = 0.5;
};

/// VGG16 conv widths, grouped by block.
inline constexpr std::size_t kBlockDepths[5] = {2, 2, 3, 3, 3};
inline constexpr std::size_t kBlockWidths[5] = {64, 128, 256, 512, 512};
inline constexpr std::size_t kHeadWidths[2] = {1024, 512};

template <typename T>
struct ParamSlot {
  std::size_t layer;  // index into the layer list
  TensorT<T> weight;  // conv [out,in,3,3], dense [out,in]
  TensorT<T> bias;
};

/// Parameter gradients keyed by tensor name ("block1_conv1/kernel", "head_out/bias", ...).
template <typename T>
using GradientStore = std::map<std::string, TensorT<T>>;

template <typename T>
class NetworkGraph;

/// Activations cached by a train-mode forward pass, replayed in reverse by
/// backward(). Only layers from the first trainable one onward are recorded;
/// nothing upstream of it needs a gradient. Single owner, one per step.
template <typename T>
class GradTape {
 public:
  struct Entry {
    std::size_t layer;
    TensorT<T> saved;  // layer input, or softmax output
    PoolIndices pool;
    TensorT<T> mask;
  };

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() {
    entries_.clear();
    graph_ = nullptr;
  }

 private:
  friend class NetworkGraph<T>;
  const NetworkGraph<T>* graph_ = nullptr;
  std::vector<Entry> entries_;
};

enum class ParamGroup { kBase, kHead, kTrainable, kAll };

template <typename T>
class NetworkGraph {
 public:
  /// VGG16 conv stack plus the dense(1024) -> dense(512) -> dense(classes)
  /// head. Conv parameters start as zero placeholders; head parameters are
  /// zero until init_head(). The conv base starts frozen.
  static NetworkGraph build(const ArchConfig& config);

  const ArchConfig& config() const noexcept { return config_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::vector<ParamSlot<T>>& params() noexcept { return params_; }
  const std::vector<ParamSlot<T>>& params() const noexcept { return params_; }

  ParamSlot<T>& param(std::string_view layer);
  const ParamSlot<T>& param(std::string_view layer) const;
  bool trainable(const ParamSlot<T>& slot) const { return layers_[slot.layer].trainable; }

  std::size_t flatten_width() const noexcept { return flatten_width_; }
  std::size_t parameter_count(ParamGroup group) const;

  /// true: conv base frozen, head trainable. false: everything trainable.
  void set_trainable(bool freeze_base);

  /// Glorot-uniform dense weights, zero biases.
  void init_head(Rng& rng);
  /// He-uniform conv weights, zero biases; stands in for imported weights
  /// when none are supplied and in tests.
  void init_base(Rng& rng);

  /// Class probabilities [n, classes] for a batch [n, channels, size, size].
  /// Train mode needs `rng` for dropout; passing a tape records what
  /// backward() needs.
  TensorT<T> forward(const TensorT<T>& batch, Mode mode, Rng* rng = nullptr, GradTape<T>* tape = nullptr) const;

  /// Gradients of every trainable parameter given dL/d(probabilities).
  GradientStore<T> backward(const GradTape<T>& tape, const TensorT<T>& probs_grad) const;
  /// Same, entering below the softmax with dL/d(logits).
  GradientStore<T> backward_from_logits(const GradTape<T>& tape, const TensorT<T>& logits_grad) const;

  template <typename U>
  NetworkGraph<U> cast() const {
    NetworkGraph<U> g = NetworkGraph<U>::build(config_);
    for (std::size_t i = 0; i < layers_.size(); ++i) g.layers_[i].trainable = layers_[i].trainable;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      g.params_[i].weight = params_[i].weight.template cast<U>();
      g.params_[i].bias = params_[i].bias.template cast<U>();
    }
    return g;
  }

 private:
  template <typename>
  friend class NetworkGraph;

  GradientStore<T> backward_impl(const GradTape<T>& tape, TensorT<T> grad, bool from_logits) const;
  std::size_t slot_of_layer(std::size_t layer) const;

  ArchConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<ParamSlot<T>> params_;
  std::vector<std::size_t> layer_to_slot_;
  std::size_t flatten_width_ = 0;
};

std::string kernel_name(std::string_view layer);
std::string bias_name(std::string_view layer);
bool is_base_layer(std::string_view layer);

NetworkGraph<float> build_modified_vgg16(std::size_t num_classes = 3, std::size_t input_size = 150);

extern template class NetworkGraph<float>;
extern template class NetworkGraph<double>;

}  // namespace skinnet
