#pragma once

#include <cmath>
#include <string>

#include "gam/error.hpp"
#include "gam/nn/param_store.hpp"

namespace gam::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RmsPropConfig {
  double decay = 0.99;
  double eps = 1e-5;
};

namespace detail {
inline void require_finite_grads(const ParamStore& p, const char* who) {
  for (const auto& b : p.blocks())
    if (!b.grad.allFinite())
      throw NumericalError(std::string(who) + ": non-finite gradient in block '" + b.name +
                           "' at step " + std::to_string(p.step_count()));
}
}  // namespace detail

/// Bias-corrected Adam. Slot m holds the first moment, v the second. Blocks
/// whose gradient is exactly zero are left untouched, slots included, so a
/// zero-gradient step is a no-op.
inline void adam_step(ParamStore& params, double lr, const AdamConfig& cfg = {}) {
  detail::require_finite_grads(params, "adam_step");
  params.bump_step();
  const double t = static_cast<double>(params.step_count());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& b : params.blocks()) {
    if (b.grad.isZero(0.0)) continue;
    b.m = cfg.beta1 * b.m + (1.0 - cfg.beta1) * b.grad;
    b.v = cfg.beta2 * b.v + (1.0 - cfg.beta2) * b.grad.cwiseAbs2();
    b.value.array() -= lr * (b.m.array() / c1) / ((b.v.array() / c2).sqrt() + cfg.eps);
  }
}

/// RMSProp with eps outside the square root. Slot v holds the running mean
/// square.
inline void rmsprop_step(ParamStore& params, double lr, const RmsPropConfig& cfg = {}) {
  detail::require_finite_grads(params, "rmsprop_step");
  params.bump_step();
  for (auto& b : params.blocks()) {
    if (b.grad.isZero(0.0)) continue;
    b.v = cfg.decay * b.v + (1.0 - cfg.decay) * b.grad.cwiseAbs2();
    b.value.array() -= lr * b.grad.array() / (b.v.array().sqrt() + cfg.eps);
  }
}

}  // namespace gam::nn
