#include "cordcpd/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cordcpd {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

ad::Var gumbel_softmax(ad::Var logits, double temperature, Rng& rng, bool hard) {
  if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  Tensor noise(logits.shape());
  for (double& v : noise.data()) v = rng.gumbel();
  auto& tape = logits.tape();
  auto perturbed = ad::add(logits, tape.constant(std::move(noise)));
  auto soft = ad::softmax_rows(ad::affine(perturbed, 1.0 / temperature, 0.0));
  return hard ? ad::straight_through_one_hot(soft) : soft;
}

}  // namespace cordcpd
