#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gam/nn/param_store.hpp"

namespace gam::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int coordinates = 0;
};

/// `loss(backprop)` must return the loss for the current parameter values and,
/// when `backprop` is true, accumulate analytic gradients into the stores
/// (which are zeroed beforehand). Coordinates are drawn uniformly over the
/// union of all stores. Relative error uses max(|a|, |n|, floor) as the
/// denominator so that vanishing gradients compare absolutely.
inline GradCheckResult grad_check(const std::function<double(bool)>& loss,
                                  const std::vector<ParamStore*>& stores, int n_samples,
                                  std::uint64_t seed, double h = 1e-5, double floor = 1e-6) {
  for (auto* s : stores) s->zero_grad();
  loss(true);

  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (auto* s : stores) {
    sizes.push_back(s->coordinate_count());
    total += sizes.back();
  }
  GradCheckResult res;
  if (total == 0) return res;

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int n = 0; n < n_samples; ++n) {
    std::size_t k = pick(rng);
    std::size_t si = 0;
    while (k >= sizes[si]) k -= sizes[si++];
    ParamStore& s = *stores[si];

    const double analytic = s.grad_coord(k);
    double& p = s.coord(k);
    const double orig = p;
    p = orig + h;
    const double lp = loss(false);
    p = orig - h;
    const double lm = loss(false);
    p = orig;
    const double numeric = (lp - lm) / (2.0 * h);

    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    res.max_abs_err = std::max(res.max_abs_err, abs_err);
    res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
    ++res.coordinates;
  }
  return res;
}

}  // namespace gam::nn
