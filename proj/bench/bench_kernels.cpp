// Parallel kernels vs the serial reference kernels on VGG16-shaped layers.
//
//   ./build/bench/bench_kernels --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include "skinnet/ops.hpp"

namespace {

using namespace skinnet;

Tensor random(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

struct ConvCase {
  Tensor x;
  ConvParams<float> p;
  Tensor up;
};

// args: in channels, out channels, spatial size
ConvCase make_conv(const benchmark::State& state) {
  Rng rng(1);
  const auto cin = static_cast<std::size_t>(state.range(0));
  const auto cout = static_cast<std::size_t>(state.range(1));
  const auto side = static_cast<std::size_t>(state.range(2));
  return {random({1, cin, side, side}, rng), {random({cout, cin, 3, 3}, rng), random({cout}, rng)},
          random({1, cout, side, side}, rng)};
}

void set_conv_counters(benchmark::State& state) {
  const double flops = 2.0 * 9 * static_cast<double>(state.range(0) * state.range(1) * state.range(2) * state.range(2));
  state.counters["GFLOPS"] =
      benchmark::Counter(flops, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void BM_ConvForward(benchmark::State& state) {
  auto c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d_forward(c.x, c.p));
  set_conv_counters(state);
}

void BM_ConvForwardReference(benchmark::State& state) {
  auto c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_forward(c.x, c.p));
  set_conv_counters(state);
}

void BM_ConvBackward(benchmark::State& state) {
  auto c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d_backward(c.x, c.p, c.up));
  set_conv_counters(state);
}

void BM_ConvBackwardReference(benchmark::State& state) {
  auto c = make_conv(state);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_backward(c.x, c.p, c.up));
  set_conv_counters(state);
}

void ConvShapes(benchmark::internal::Benchmark* b) {
  b->Args({3, 64, 150})->Args({64, 64, 150})->Args({128, 256, 37})->Args({512, 512, 9})->Unit(benchmark::kMillisecond);
}

void ConvShapesSmall(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 37})->Args({512, 512, 9})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ConvForward)->Apply(ConvShapes);
BENCHMARK(BM_ConvForwardReference)->Apply(ConvShapesSmall);
BENCHMARK(BM_ConvBackward)->Apply(ConvShapesSmall);
BENCHMARK(BM_ConvBackwardReference)->Apply(ConvShapesSmall);

// args: batch, in units, out units
void BM_DenseForward(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  auto x = random({n, in}, rng);
  DenseParams<float> p{random({out, in}, rng), random({out}, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(ops::dense_forward(x, p));
}

void BM_DenseForwardReference(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  auto x = random({n, in}, rng);
  DenseParams<float> p{random({out, in}, rng), random({out}, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(reference::dense_forward(x, p));
}

BENCHMARK(BM_DenseForward)->Args({8, 8192, 1024})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForwardReference)->Args({8, 8192, 1024})->Unit(benchmark::kMillisecond);

void BM_MaxPool(benchmark::State& state) {
  Rng rng(3);
  auto x = random({8, 64, 150, 150}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::maxpool2x2_forward(x));
}

void BM_MaxPoolReference(benchmark::State& state) {
  Rng rng(3);
  auto x = random({8, 64, 150, 150}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reference::maxpool2x2_forward(x));
}

BENCHMARK(BM_MaxPool)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPoolReference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
