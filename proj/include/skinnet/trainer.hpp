#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "skinnet/dataset.hpp"
#include "skinnet/network.hpp"
#include "skinnet/weights_io.hpp"

namespace skinnet {

struct HyperParams {
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 150;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::map<std::string, TensorT<T>> m;
  std::map<std::string, TensorT<T>> v;
  std::uint64_t t = 0;
};

template <typename T>
struct NamedParam {
  std::string name;
  TensorT<T>* tensor;
};

template <typename T>
std::vector<NamedParam<T>> trainable_tensors(NetworkGraph<T>& graph);

/// One Adam update with bias correction. `grads` must cover exactly the
/// given parameters.
template <typename T>
void adam_step(std::span<const NamedParam<T>> params, const GradientStore<T>& grads, AdamState<T>& state,
               const HyperParams& hp);

template <typename T>
void adam_step(NetworkGraph<T>& graph, const GradientStore<T>& grads, AdamState<T>& state, const HyperParams& hp) {
  const auto params = trainable_tensors(graph);
  adam_step(std::span<const NamedParam<T>>(params), grads, state, hp);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean train loss
  double accuracy = 0;    // train-mode accuracy
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// `{"epoch":n,"loss":x,"acc":y,"secs":t}`
std::string to_json_line(const EpochRecord& r);

struct StepResult {
  double loss = 0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

/// Lowest index wins ties.
std::size_t argmax_row(const Tensor& probs, std::size_t row);

/// Owns the optimizer state for one graph; step() is one forward / loss /
/// backward / Adam update on a batch.
class Trainer {
 public:
  Trainer(NetworkGraph<float>& graph, HyperParams hp);

  StepResult step(const Tensor& images, const Tensor& labels, Rng& dropout_rng);

  const AdamState<float>& state() const noexcept { return state_; }
  const HyperParams& hyper_params() const noexcept { return hp_; }

 private:
  NetworkGraph<float>& graph_;
  HyperParams hp_;
  AdamState<float> state_;
  GradTape<float> tape_;
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints or log file
  AugmentConfig augment;
  LoaderOptions loader;
  ArchiveMetadata metadata;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs hp.epochs epochs. Writes epoch_{n}.wts after every epoch (keeping
/// only the latest and the lowest-loss one), final.wts at the end, and
/// appends one JSON line per epoch to train_log.jsonl.
TrainLog train(NetworkGraph<float>& graph, const DatasetIndex& index, const HyperParams& hp,
               const TrainOptions& options);

struct Predictions {
  std::vector<std::size_t> labels;
  Tensor probs;  // [n, classes]
  std::vector<std::string> source_paths;
};

/// Eval-mode inference over a split, in index order.
Predictions predict_split(const NetworkGraph<float>& graph, const DatasetIndex& index, Split split,
                          const LoaderOptions& loader, std::size_t batch_size = 8);

struct LossAccuracy {
  double loss = 0;
  double accuracy = 0;
};

/// Mean cross-entropy and top-1 accuracy of given probabilities.
LossAccuracy loss_and_accuracy(const Tensor& probs, std::span<const std::size_t> labels);

LossAccuracy evaluate_loss(const NetworkGraph<float>& graph, const DatasetIndex& index, Split split,
                           const LoaderOptions& loader, std::size_t batch_size = 8);

extern template std::vector<NamedParam<float>> trainable_tensors(NetworkGraph<float>&);
extern template std::vector<NamedParam<double>> trainable_tensors(NetworkGraph<double>&);
extern template void adam_step(std::span<const NamedParam<float>>, const GradientStore<float>&, AdamState<float>&,
                               const HyperParams&);
extern template void adam_step(std::span<const NamedParam<double>>, const GradientStore<double>&,
                               AdamState<double>&, const HyperParams&);

}  // namespace skinnet
