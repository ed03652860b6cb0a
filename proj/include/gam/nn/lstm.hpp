#pragma once

#include <string>

#include "gam/error.hpp"
#include "gam/nn/functional.hpp"
#include "gam/nn/param_store.hpp"

namespace gam::nn {

/// Hidden and cell state, one column per batch element.
struct LstmState {
  Matrix hidden;
  Matrix cell;

  static LstmState zeros(int hidden_size, int batch = 1) {
    return {Matrix::Zero(hidden_size, batch), Matrix::Zero(hidden_size, batch)};
  }
};

/// Everything needed to backprop one step.
struct LstmStepTape {
  Matrix xh;  // [input; h_prev]
  Matrix i, f, g, o;
  Matrix c_prev;
  Matrix tanh_c;
};

// Gate rows in the packed weight are ordered input, forget, candidate, output.
class Lstm {
 public:
  Lstm() = default;
  Lstm(int input_size, int hidden_size, const std::string& prefix = "lstm/")
      : input_size_(input_size), hidden_size_(hidden_size) {
    if (input_size < 1 || hidden_size < 1) throw DimensionError("lstm sizes must be >= 1");
    w_ = params_.add(prefix + "W", 4 * hidden_size, input_size + hidden_size);
    b_ = params_.add(prefix + "b", 4 * hidden_size, 1);
  }

  int input_size() const { return input_size_; }
  int hidden_size() const { return hidden_size_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  LstmState step(const Matrix& input, const LstmState& state, LstmStepTape* tape = nullptr) const {
    const int hs = hidden_size_;
    if (input.rows() != input_size_)
      throw DimensionError("lstm: expected input of size " + std::to_string(input_size_) +
                           ", got " + std::to_string(input.rows()));
    if (state.hidden.rows() != hs || state.cell.rows() != hs ||
        state.hidden.cols() != input.cols() || state.cell.cols() != input.cols())
      throw DimensionError("lstm: state shape mismatch");

    Matrix xh(input_size_ + hs, input.cols());
    xh.topRows(input_size_) = input;
    xh.bottomRows(hs) = state.hidden;
    Matrix z = params_.value(w_) * xh;
    z.colwise() += params_.value(b_).col(0);

    auto sig = [](double v) { return sigmoid(v); };
    Matrix i = z.topRows(hs).unaryExpr(sig);
    Matrix f = z.middleRows(hs, hs).unaryExpr(sig);
    Matrix g = z.middleRows(2 * hs, hs).array().tanh().matrix();
    Matrix o = z.bottomRows(hs).unaryExpr(sig);

    LstmState next;
    next.cell = (f.array() * state.cell.array() + i.array() * g.array()).matrix();
    Matrix tc = next.cell.array().tanh().matrix();
    next.hidden = (o.array() * tc.array()).matrix();

    if (tape) {
      tape->xh = std::move(xh);
      tape->i = std::move(i);
      tape->f = std::move(f);
      tape->g = std::move(g);
      tape->o = std::move(o);
      tape->c_prev = state.cell;
      tape->tanh_c = std::move(tc);
    }
    return next;
  }

  /// Given gradients w.r.t. the step's outputs (d_hidden, d_cell), accumulates
  /// parameter gradients and returns (d_input, d_prev_state).
  std::pair<Matrix, LstmState> backward_step(const LstmStepTape& t, const Matrix& d_hidden,
                                             const Matrix& d_cell) {
    const int hs = hidden_size_;
    Matrix dc = d_cell + (d_hidden.array() * t.o.array() * (1.0 - t.tanh_c.array().square())).matrix();
    Matrix dz(4 * hs, d_hidden.cols());
    dz.topRows(hs) = (dc.array() * t.g.array() * t.i.array() * (1.0 - t.i.array())).matrix();
    dz.middleRows(hs, hs) = (dc.array() * t.c_prev.array() * t.f.array() * (1.0 - t.f.array())).matrix();
    dz.middleRows(2 * hs, hs) = (dc.array() * t.i.array() * (1.0 - t.g.array().square())).matrix();
    dz.bottomRows(hs) = (d_hidden.array() * t.tanh_c.array() * t.o.array() * (1.0 - t.o.array())).matrix();

    params_.grad(w_).noalias() += dz * t.xh.transpose();
    params_.grad(b_).col(0) += dz.rowwise().sum();
    Matrix dxh = params_.value(w_).transpose() * dz;

    LstmState dprev;
    dprev.hidden = dxh.bottomRows(hs);
    dprev.cell = (dc.array() * t.f.array()).matrix();
    return {dxh.topRows(input_size_), std::move(dprev)};
  }

 private:
  int input_size_ = 0;
  int hidden_size_ = 0;
  int w_ = -1;
  int b_ = -1;
  ParamStore params_;
};

/// Single-sample convenience wrapper.
inline LstmState lstm_step(const Lstm& cell, const Vector& input, const LstmState& state) {
  return cell.step(Matrix(input), state);
}

}  // namespace gam::nn
