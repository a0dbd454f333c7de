#include "skinnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"

namespace skinnet {

namespace fs = std::filesystem;

void HyperParams::validate() const {
  if (!(learning_rate > 0)) fail(ErrorKind::kConfig, "learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail(ErrorKind::kConfig, "Adam betas must lie in [0, 1)");
  if (!(epsilon > 0)) fail(ErrorKind::kConfig, "Adam epsilon must be positive");
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch size must be positive");
}

template <typename T>
std::vector<NamedParam<T>> trainable_tensors(NetworkGraph<T>& graph) {
  std::vector<NamedParam<T>> out;
  for (auto& p : graph.params()) {
    if (!graph.trainable(p)) continue;
    const auto& layer = graph.layers()[p.layer].name;
    out.push_back({kernel_name(layer), &p.weight});
    out.push_back({bias_name(layer), &p.bias});
  }
  return out;
}

template <typename T>
void adam_step(std::span<const NamedParam<T>> params, const GradientStore<T>& grads, AdamState<T>& state,
               const HyperParams& hp) {
  if (grads.size() != params.size())
    fail(ErrorKind::kShape, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " trainable tensors");
  for (const auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) fail(ErrorKind::kShape, "adam_step: no gradient for " + p.name);
    require_same_shape(p.tensor->shape(), it->second.shape(), ("adam_step: " + p.name).c_str());
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const T c1 = static_cast<T>(1.0 - std::pow(hp.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(hp.beta2, t));
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  const T lr = static_cast<T>(hp.learning_rate), eps = static_cast<T>(hp.epsilon);

  for (const auto& p : params) {
    const auto& g = grads.at(p.name);
    auto& m = state.m.try_emplace(p.name, p.tensor->shape()).first->second;
    auto& v = state.v.try_emplace(p.name, p.tensor->shape()).first->second;
    T* theta = p.tensor->ptr();
    const T* gp = g.ptr();
    T* mp = m.ptr();
    T* vp = v.ptr();
    const auto n = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      mp[i] = b1 * mp[i] + (T(1) - b1) * gp[i];
      vp[i] = b2 * vp[i] + (T(1) - b2) * gp[i] * gp[i];
      const T mhat = mp[i] / c1;
      const T vhat = vp[i] / c2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["acc"] = r.accuracy;
  j["secs"] = r.seconds;
  return j.dump();
}

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t width = probs.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (probs.at(row, j) > probs.at(row, best)) best = j;
  return best;
}

Trainer::Trainer(NetworkGraph<float>& graph, HyperParams hp) : graph_(graph), hp_(hp) { hp_.validate(); }

StepResult Trainer::step(const Tensor& images, const Tensor& labels, Rng& dropout_rng) {
  const Tensor probs = graph_.forward(images, Mode::kTrain, &dropout_rng, &tape_);
  StepResult r;
  r.loss = static_cast<double>(ops::cross_entropy(labels, probs));
  if (!std::isfinite(r.loss)) fail(ErrorKind::kNumeric, "non-finite loss");
  r.count = probs.dim(0);
  for (std::size_t i = 0; i < r.count; ++i) r.correct += labels.at(i, argmax_row(probs, i)) == 1.0f;

  // Enter below the softmax: (p - y) / n is the exact gradient of the mean
  // loss w.r.t. the logits wherever the probability clamp is inactive.
  const auto grads = graph_.backward_from_logits(tape_, ops::softmax_cross_entropy_backward(probs, labels));
  tape_.clear();
  for (const auto& [name, g] : grads)
    if (!g.all_finite()) fail(ErrorKind::kNumeric, "non-finite gradient for " + name);
  adam_step(graph_, grads, state_, hp_);
  return r;
}

namespace {

fs::path epoch_path(const fs::path& dir, std::size_t epoch) {
  return dir / ("epoch_" + std::to_string(epoch) + ".wts");
}

}  // namespace

TrainLog train(NetworkGraph<float>& graph, const DatasetIndex& index, const HyperParams& hp,
               const TrainOptions& options) {
  hp.validate();
  options.augment.validate();
  if (index.count(Split::kTrain) == 0) fail(ErrorKind::kData, "training split is empty");
  if (graph.config().input_size != options.loader.image_size)
    fail(ErrorKind::kConfig, "loader image size does not match the network input size");

  const bool writing = !options.checkpoint_dir.empty();
  const fs::path log_path = options.checkpoint_dir / "train_log.jsonl";
  if (writing) {
    std::error_code ec;
    fs::create_directories(options.checkpoint_dir, ec);
    std::ofstream(log_path, std::ios::trunc);
    if (!fs::exists(log_path)) fail(ErrorKind::kIo, "cannot write " + log_path.string());
  }

  Trainer trainer(graph, hp);
  TrainLog log;
  const Rng root(hp.seed);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    BatchStream stream(index, Split::kTrain, hp.batch_size, true, options.augment, root.fork("data", epoch),
                       options.loader);
    Rng dropout_rng = root.fork("dropout", epoch);
    double loss_sum = 0;
    std::size_t correct = 0, seen = 0, step = 0;
    while (auto batch = stream.next()) {
      ++step;
      StepResult r;
      try {
        r = trainer.step(batch->images, batch->labels, dropout_rng);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        fail(ErrorKind::kNumeric, "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what());
      }
      loss_sum += r.loss * static_cast<double>(r.count);
      correct += r.correct;
      seen += r.count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(seen);
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.epochs.push_back(rec);

    if (writing) {
      save_weights(graph, epoch_path(options.checkpoint_dir, epoch), options.metadata);
      const std::size_t previous_best = best_epoch;
      if (rec.loss < best_loss) {
        best_loss = rec.loss;
        best_epoch = epoch;
      }
      // keep the latest and the best-loss checkpoint only
      std::error_code ec;
      if (epoch > 1 && epoch - 1 != best_epoch) fs::remove(epoch_path(options.checkpoint_dir, epoch - 1), ec);
      if (previous_best != 0 && previous_best != best_epoch && previous_best != epoch - 1)
        fs::remove(epoch_path(options.checkpoint_dir, previous_best), ec);

      std::ofstream out(log_path, std::ios::app);
      out << to_json_line(rec) << '\n';
      if (!out) fail(ErrorKind::kIo, "cannot append to " + log_path.string());
    }
    if (options.on_epoch) options.on_epoch(rec);
  }

  if (writing) save_weights(graph, options.checkpoint_dir / "final.wts", options.metadata);
  return log;
}

Predictions predict_split(const NetworkGraph<float>& graph, const DatasetIndex& index, Split split,
                          const LoaderOptions& loader, std::size_t batch_size) {
  BatchStream stream(index, split, batch_size, false, AugmentConfig{0, 0, 0, false}, Rng(0), loader);
  Predictions out;
  std::vector<float> probs;
  while (auto b = stream.next()) {
    const Tensor p = graph.forward(b->images, Mode::kEval);
    probs.insert(probs.end(), p.values().begin(), p.values().end());
    out.labels.insert(out.labels.end(), b->class_indices.begin(), b->class_indices.end());
    out.source_paths.insert(out.source_paths.end(), b->source_paths.begin(), b->source_paths.end());
  }
  out.probs = Tensor(Shape{out.labels.size(), graph.config().num_classes}, std::move(probs));
  return out;
}

LossAccuracy loss_and_accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (labels.empty()) fail(ErrorKind::kData, "no samples to evaluate");
  if (probs.rank() != 2 || probs.dim(0) != labels.size())
    fail(ErrorKind::kShape, "loss_and_accuracy: probabilities do not match labels");
  TensorD y(Shape{labels.size(), probs.dim(1)});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= probs.dim(1)) fail(ErrorKind::kShape, "loss_and_accuracy: label out of range");
    y.at(i, labels[i]) = 1.0;
    correct += argmax_row(probs, i) == labels[i];
  }
  return {ops::cross_entropy(y, probs.cast<double>()),
          static_cast<double>(correct) / static_cast<double>(labels.size())};
}

LossAccuracy evaluate_loss(const NetworkGraph<float>& graph, const DatasetIndex& index, Split split,
                           const LoaderOptions& loader, std::size_t batch_size) {
  if (index.count(split) == 0) fail(ErrorKind::kData, std::string("split '") + to_string(split) + "' is empty");
  const auto pred = predict_split(graph, index, split, loader, batch_size);
  return loss_and_accuracy(pred.probs, pred.labels);
}

template std::vector<NamedParam<float>> trainable_tensors(NetworkGraph<float>&);
template std::vector<NamedParam<double>> trainable_tensors(NetworkGraph<double>&);
template void adam_step(std::span<const NamedParam<float>>, const GradientStore<float>&, AdamState<float>&,
                        const HyperParams&);
template void adam_step(std::span<const NamedParam<double>>, const GradientStore<double>&, AdamState<double>&,
                        const HyperParams&);

}  // namespace skinnet
