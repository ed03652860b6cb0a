#pragma once

#include <string>
#include <vector>

#include "gam/error.hpp"
#include "gam/nn/functional.hpp"
#include "gam/nn/param_store.hpp"

namespace gam::nn {

enum class Activation { kRelu, kTanh };
enum class OutputMode { kLinear, kSoftmax, kSigmoid };

struct MlpSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kRelu;
  OutputMode output_mode = OutputMode::kLinear;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw DimensionError("MlpSpec needs at least 2 layer sizes");
    for (int s : layer_sizes)
      if (s < 1) throw DimensionError("MlpSpec layer sizes must be >= 1");
  }
};

/// Activations kept for backprop. pre[l] is the affine output of layer l,
/// post[l] its activation; post[-1] is the input (stored as `input`).
struct MlpTape {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

struct MlpResult {
  Matrix output;
  MlpTape tape;
};

/// Adds W<l>/b<l> blocks for every layer of `spec` to `store`.
inline void mlp_add_params(const MlpSpec& spec, ParamStore& store, const std::string& prefix = "") {
  spec.validate();
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto ls = static_cast<std::size_t>(l);
    store.add(prefix + "W" + std::to_string(l), spec.layer_sizes[ls + 1], spec.layer_sizes[ls]);
    store.add(prefix + "b" + std::to_string(l), spec.layer_sizes[ls + 1], 1);
  }
}

namespace detail {

inline void check_layout(const MlpSpec& spec, const ParamStore& params, int offset) {
  if (params.size() < offset + 2 * spec.num_layers())
    throw DimensionError("param store has too few blocks for MLP");
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& w = params.value(offset + 2 * l);
    const auto ls = static_cast<std::size_t>(l);
    if (w.rows() != spec.layer_sizes[ls + 1] || w.cols() != spec.layer_sizes[ls])
      throw DimensionError("mlp layer " + std::to_string(l) + ": weight block shape mismatch");
  }
}

inline Matrix apply_hidden(Activation a, const Matrix& z) {
  return a == Activation::kRelu ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh().matrix());
}

inline Matrix apply_output(OutputMode m, const Matrix& z) {
  switch (m) {
    case OutputMode::kLinear: return z;
    case OutputMode::kSoftmax: return softmax_columns(z);
    case OutputMode::kSigmoid: return z.unaryExpr([](double v) { return sigmoid(v); });
  }
  return z;
}

}  // namespace detail

/// Batched forward pass: `input` is (input_size x batch). Parameters are read
/// from `params` starting at block `offset` (W0, b0, W1, b1, ...).
inline MlpResult mlp_forward(const MlpSpec& spec, const ParamStore& params, const Matrix& input,
                             int offset = 0) {
  spec.validate();
  detail::check_layout(spec, params, offset);
  if (input.rows() != spec.input_size())
    throw DimensionError("mlp layer 0: expected input of size " + std::to_string(spec.input_size()) +
                         ", got " + std::to_string(input.rows()));
  MlpResult r;
  r.tape.input = input;
  const int nl = spec.num_layers();
  r.tape.pre.reserve(static_cast<std::size_t>(nl));
  r.tape.post.reserve(static_cast<std::size_t>(nl));
  const Matrix* x = &r.tape.input;
  for (int l = 0; l < nl; ++l) {
    Matrix z = params.value(offset + 2 * l) * (*x);
    z.colwise() += params.value(offset + 2 * l + 1).col(0);
    Matrix a = (l + 1 == nl) ? detail::apply_output(spec.output_mode, z)
                             : detail::apply_hidden(spec.activation, z);
    r.tape.pre.push_back(std::move(z));
    r.tape.post.push_back(std::move(a));
    x = &r.tape.post.back();
  }
  r.output = r.tape.post.back();
  return r;
}

inline Vector mlp_forward(const MlpSpec& spec, const ParamStore& params, const Vector& input,
                          int offset = 0) {
  return mlp_forward(spec, params, Matrix(input), offset).output.col(0);
}

/// Backprop of d(loss)/d(output) through the tape. Accumulates into the
/// parameter gradients and returns d(loss)/d(input).
inline Matrix mlp_backward(const MlpSpec& spec, ParamStore& params, const MlpTape& tape,
                           const Matrix& d_output, int offset = 0) {
  const int nl = spec.num_layers();
  const auto last = static_cast<std::size_t>(nl - 1);
  if (d_output.rows() != tape.post[last].rows() || d_output.cols() != tape.post[last].cols())
    throw DimensionError("mlp backward: output gradient shape mismatch");

  Matrix dz;
  const Matrix& y = tape.post[last];
  switch (spec.output_mode) {
    case OutputMode::kLinear: dz = d_output; break;
    case OutputMode::kSigmoid: dz = (d_output.array() * y.array() * (1.0 - y.array())).matrix(); break;
    case OutputMode::kSoftmax: {
      dz.resize(y.rows(), y.cols());
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const double dot = d_output.col(c).dot(y.col(c));
        dz.col(c) = (y.col(c).array() * (d_output.col(c).array() - dot)).matrix();
      }
      break;
    }
  }

  for (int l = nl - 1; l >= 0; --l) {
    const auto ls = static_cast<std::size_t>(l);
    const Matrix& x = (l == 0) ? tape.input : tape.post[ls - 1];
    params.grad(offset + 2 * l).noalias() += dz * x.transpose();
    params.grad(offset + 2 * l + 1).col(0) += dz.rowwise().sum();
    Matrix dx = params.value(offset + 2 * l).transpose() * dz;
    if (l == 0) return dx;
    const Matrix& a = tape.post[ls - 1];
    if (spec.activation == Activation::kRelu)
      dz = (dx.array() * (tape.pre[ls - 1].array() > 0.0).cast<double>()).matrix();
    else
      dz = (dx.array() * (1.0 - a.array().square())).matrix();
  }
  return {};
}

/// Spec + owned parameters.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) { mlp_add_params(spec_, params_); }

  const MlpSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  MlpResult forward(const Matrix& input) const { return mlp_forward(spec_, params_, input); }
  Vector forward(const Vector& input) const { return mlp_forward(spec_, params_, input); }
  Matrix backward(const MlpTape& tape, const Matrix& d_output) {
    return mlp_backward(spec_, params_, tape, d_output);
  }

 private:
  MlpSpec spec_;
  ParamStore params_;
};

}  // namespace gam::nn
