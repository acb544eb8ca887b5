#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>

#include "tomdecomp/core.hpp"

namespace tomdecomp {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// First/second moment estimates and the number of steps taken so far.
struct AdamWState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One AdamW update in place. Weight decay is decoupled: the weights are first
/// shrunk by (1 - lr * weight_decay), then the bias-corrected Adam step is
/// subtracted.
inline void adamw_step(std::span<double> weights, std::span<const double> grad, AdamWState& state,
                       const AdamWHyper& hp, double lr) {
  if (grad.size() != weights.size() || state.m.size() != weights.size() || state.v.size() != weights.size())
    throw Error("probe", "adamw_step shape mismatch: weights " + std::to_string(weights.size()) + ", grad " +
                            std::to_string(grad.size()) + ", state " + std::to_string(state.m.size()));
  if (!all_finite(grad)) throw Error("probe", "adamw_step received a non-finite gradient");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - lr * hp.weight_decay;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] *= decay;
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grad[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    weights[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

/// lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T)) / 2, with the
/// endpoints returned exactly.
inline double cosine_lr(double t, double total, double lr_max, double lr_min) {
  if (!(total >= 1.0)) throw Error("probe", "cosine_lr needs T >= 1");
  if (!(t >= 0.0 && t <= total))
    throw Error("probe", "cosine_lr epoch " + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");
  if (t == 0.0) return lr_max;
  if (t == total) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t / total));
}

}  // namespace tomdecomp
