#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cordcpd/autodiff.hpp"
#include "cordcpd/rng.hpp"

namespace cordcpd {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n_params, AdamConfig cfg) : config(cfg), m(n_params, 0.0), v(n_params, 0.0) {}
};

/// Bias-corrected Adam update in place. Throws NumericError on a non-finite
/// gradient before touching any state.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Relaxed categorical sample softmax((logits + g) / temperature) per row,
/// with g i.i.d. Gumbel(0, 1). With `hard` the forward value is the one-hot
/// argmax and gradients flow through the soft sample.
ad::Var gumbel_softmax(ad::Var logits, double temperature, Rng& rng, bool hard);

}  // namespace cordcpd
