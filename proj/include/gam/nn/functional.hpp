#pragma once

#include <algorithm>
#include <cmath>

#include "gam/error.hpp"
#include "gam/nn/param_store.hpp"

namespace gam::nn {

inline constexpr double kProbClamp = 1e-7;

/// Max-shifted softmax; identical output for logits + c.
inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  if (logits.size() == 0) throw PreconditionError("softmax of empty vector");
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

inline Vector log_softmax(const Eigen::Ref<const Vector>& logits) {
  if (logits.size() == 0) throw PreconditionError("log_softmax of empty vector");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Column-wise softmax of a (classes x batch) matrix.
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Negative log-likelihood of a Bernoulli label; the prediction is clamped to
/// [1e-7, 1-1e-7] first.
inline double binary_cross_entropy(double pred, int label) {
  if (label != 0 && label != 1) throw PreconditionError("binary label must be 0 or 1");
  const double p = std::clamp(pred, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

/// d(bce)/d(pred). Zero inside the clamp region, where the loss is flat.
inline double binary_cross_entropy_grad(double pred, int label) {
  if (pred <= kProbClamp || pred >= 1.0 - kProbClamp) return 0.0;
  return label == 1 ? -1.0 / pred : 1.0 / (1.0 - pred);
}

/// Shannon entropy (nats) of a probability vector.
inline double entropy(const Eigen::Ref<const Vector>& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

}  // namespace gam::nn
