#pragma once

// Worst-case finite-difference agreement per op over many seeds, in double.

#include <algorithm>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "scenarios.hpp"
#include "skinnet/network.hpp"
#include "skinnet/ops.hpp"

namespace skinnet::testing {

struct GradReport {
  std::string op;
  std::size_t seeds = 0;
  double worst = 0;
};

inline GradReport grad_conv(std::size_t seeds) {
  GradReport r{"conv", seeds, 0};
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    ConvParams<double> p{random_tensor<double>({2, 2, 3, 3}, rng), random_tensor<double>({2}, rng)};
    auto x = random_tensor<double>({1, 2, 4, 4}, rng);
    auto w = random_tensor<double>({1, 2, 4, 4}, rng);
    auto g = ops::conv2d_backward(x, p, w);
    auto f = [&](const ConvParams<double>& q, const TensorD& v) { return weighted_sum(ops::conv2d_forward(v, q), w); };
    auto nx = numeric_gradient([&](const TensorD& v) { return f(p, v); }, x, 1e-3);
    auto nk = numeric_gradient([&](const TensorD& k) { return f({k, p.bias}, x); }, p.kernel, 1e-3);
    auto nb = numeric_gradient([&](const TensorD& b) { return f({p.kernel, b}, x); }, p.bias, 1e-3);
    r.worst = std::max({r.worst, max_relative_error(g.input, nx), max_relative_error(g.kernel, nk),
                        max_relative_error(g.bias, nb)});
  }
  return r;
}

inline GradReport grad_dense(std::size_t seeds) {
  GradReport r{"dense", seeds, 0};
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(3000 + s);
    DenseParams<double> p{random_tensor<double>({4, 6}, rng), random_tensor<double>({4}, rng)};
    auto x = random_tensor<double>({3, 6}, rng);
    auto w = random_tensor<double>({3, 4}, rng);
    auto g = ops::dense_backward(x, p, w);
    auto f = [&](const DenseParams<double>& q, const TensorD& v) { return weighted_sum(ops::dense_forward(v, q), w); };
    auto nx = numeric_gradient([&](const TensorD& v) { return f(p, v); }, x, 1e-3);
    auto nw = numeric_gradient([&](const TensorD& k) { return f({k, p.bias}, x); }, p.weight, 1e-3);
    auto nb = numeric_gradient([&](const TensorD& b) { return f({p.weight, b}, x); }, p.bias, 1e-3);
    r.worst = std::max({r.worst, max_relative_error(g.input, nx), max_relative_error(g.weight, nw),
                        max_relative_error(g.bias, nb)});
  }
  return r;
}

inline GradReport grad_relu(std::size_t seeds) {
  GradReport r{"relu", seeds, 0};
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(s);
    auto x = random_tensor<double>({4, 4}, rng);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(x[i]) < 1e-3) x[i] = 0.5;  // stay off the kink
    auto w = random_tensor<double>({4, 4}, rng);
    auto analytic = ops::relu_backward(x, w);
    auto numeric = numeric_gradient([&](const TensorD& v) { return weighted_sum(ops::relu_forward(v), w); }, x, 1e-5);
    r.worst = std::max(r.worst, max_relative_error(analytic, numeric));
  }
  return r;
}

inline GradReport grad_maxpool(std::size_t seeds) {
  GradReport r{"maxpool", seeds, 0};
  std::size_t done = 0;
  for (std::uint64_t s = 0; done < seeds; ++s) {
    Rng rng(2000 + s);
    auto x = random_tensor<double>({2, 2, 6, 6}, rng);
    bool near_tie = false;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 6; y += 2)
          for (std::size_t xx = 0; xx < 6; xx += 2) {
            double v[4] = {x.at(n, c, y, xx), x.at(n, c, y, xx + 1), x.at(n, c, y + 1, xx), x.at(n, c, y + 1, xx + 1)};
            std::sort(v, v + 4);
            if (v[3] - v[2] < 1e-3) near_tie = true;
          }
    if (near_tie) continue;
    auto w = random_tensor<double>({2, 2, 3, 3}, rng);
    const auto fwd = ops::maxpool2x2_forward(x);
    auto analytic = ops::maxpool2x2_backward(fwd.indices, w);
    auto numeric =
        numeric_gradient([&](const TensorD& v) { return weighted_sum(ops::maxpool2x2_forward(v).output, w); }, x, 1e-5);
    r.worst = std::max(r.worst, max_relative_error(analytic, numeric));
    ++done;
  }
  return r;
}

inline GradReport grad_softmax_ce(std::size_t seeds) {
  GradReport r{"softmax+cross-entropy", seeds, 0};
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(s);
    auto logits = random_tensor<double>({4, 3}, rng, -3, 3);
    TensorD y(Shape{4, 3});
    for (std::size_t i = 0; i < 4; ++i) y.at(i, rng.below(3)) = 1;
    auto loss = [&](const TensorD& z) { return ops::cross_entropy(y, ops::softmax(z)); };
    auto numeric = numeric_gradient(loss, logits, 1e-5);
    const auto p = ops::softmax(logits);
    auto fused = ops::softmax_cross_entropy_backward(p, y);
    auto chained = ops::softmax_backward(p, ops::cross_entropy_backward(y, p));
    r.worst = std::max({r.worst, max_relative_error(fused, numeric), max_relative_error(chained, numeric)});
  }
  return r;
}

/// Every parameter tensor of the shrunken network (all layers trainable),
/// probing `per_tensor` random coordinates of each through the full
/// train-mode forward pass and mean cross-entropy.
inline double end_to_end_worst(std::uint64_t seed, std::size_t per_tensor = 4) {
  auto g = NetworkGraph<double>::build(shrunken_config(3));
  Rng init(seed);
  g.init_base(init);
  g.init_head(init);
  g.set_trainable(false);
  Rng data = init.fork("data");
  const auto x = random_tensor<double>({2, 3, 32, 32}, data, 0, 1);
  TensorD y(Shape{2, 3});
  y.at(0, data.below(3)) = 1;
  y.at(1, data.below(3)) = 1;
  const Rng drop_seed = init.fork("dropout");

  auto loss = [&] {
    Rng drop = drop_seed;
    return ops::cross_entropy(y, g.forward(x, Mode::kTrain, &drop));
  };
  GradTape<double> tape;
  Rng drop = drop_seed;
  const auto probs = g.forward(x, Mode::kTrain, &drop, &tape);
  const auto grads = g.backward_from_logits(tape, ops::softmax_cross_entropy_backward(probs, y));

  double worst = 0;
  Rng pick = init.fork("pick");
  for (auto& slot : g.params()) {
    const auto& layer = g.layers()[slot.layer].name;
    for (auto [tensor, name] : {std::pair{&slot.weight, kernel_name(layer)}, std::pair{&slot.bias, bias_name(layer)}}) {
      const auto& grad = grads.at(name);
      for (std::size_t k = 0; k < per_tensor; ++k) {
        const std::size_t i = pick.below(tensor->size());
        const double keep = (*tensor)[i], h = 1e-6;
        (*tensor)[i] = keep + h;
        const double up = loss();
        (*tensor)[i] = keep - h;
        const double down = loss();
        (*tensor)[i] = keep;
        worst = std::max(worst, relative_error(grad[i], (up - down) / (2 * h)));
      }
    }
  }
  return worst;
}

}  // namespace skinnet::testing
