#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gam/error.hpp"
#include "gam/linalg.hpp"
#include "gam/nn/functional.hpp"
#include "gam/nn/mlp.hpp"

namespace gam::attention {

inline constexpr int kPsiHidden = 16;

/// psi(x_i, x_j) -> scalar logit: one relu hidden layer over the concatenated
/// pair.
class AttentionHead {
 public:
  AttentionHead() = default;
  explicit AttentionHead(int feature_dim, int hidden = kPsiHidden)
      : dim_(feature_dim), psi_({{2 * feature_dim, hidden, 1}, nn::Activation::kRelu, nn::OutputMode::kLinear}) {}

  int feature_dim() const { return dim_; }
  nn::Mlp& psi() { return psi_; }
  const nn::Mlp& psi() const { return psi_; }
  nn::ParamStore& params() { return psi_.params(); }
  const nn::ParamStore& params() const { return psi_.params(); }

  double logit(const nn::Vector& xi, const nn::Vector& xj) const {
    nn::Vector in(2 * dim_);
    in << xi, xj;
    return psi_.forward(in)[0];
  }

 private:
  int dim_ = 0;
  nn::Mlp psi_;
};

/// Row-stochastic matrix stored on a fixed sparsity pattern (CSR). Row i's
/// pattern is the neighbor list N_i, which always holds i.
struct StochasticMatrix {
  int n = 0;
  std::vector<int> row_ptr;  // n + 1
  std::vector<int> cols;
  std::vector<double> vals;

  int nnz() const { return static_cast<int>(cols.size()); }

  RowMatrix dense() const {
    RowMatrix w = RowMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
        w(i, cols[static_cast<std::size_t>(p)]) = vals[static_cast<std::size_t>(p)];
    return w;
  }

  /// W * X.
  RowMatrix apply(const RowMatrix& x) const {
    if (x.rows() != n) throw DimensionError("aggregate: W is " + std::to_string(n) + "x" + std::to_string(n) +
                                            " but X has " + std::to_string(x.rows()) + " rows");
    RowMatrix out = RowMatrix::Zero(n, x.cols());
    for (int i = 0; i < n; ++i)
      for (int p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
        out.row(i) += vals[static_cast<std::size_t>(p)] * x.row(cols[static_cast<std::size_t>(p)]);
    return out;
  }

  /// W^T * G.
  RowMatrix apply_transpose(const RowMatrix& g) const {
    RowMatrix out = RowMatrix::Zero(n, g.cols());
    for (int i = 0; i < n; ++i)
      for (int p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
        out.row(cols[static_cast<std::size_t>(p)]) += vals[static_cast<std::size_t>(p)] * g.row(i);
    return out;
  }

  /// Largest |row sum - 1|.
  double max_row_sum_error() const {
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
        s += vals[static_cast<std::size_t>(p)];
      e = std::max(e, std::abs(s - 1.0));
    }
    return e;
  }
};

inline StochasticMatrix from_dense(const RowMatrix& w) {
  if (w.rows() != w.cols()) throw DimensionError("stochastic matrix must be square");
  StochasticMatrix s;
  s.n = static_cast<int>(w.rows());
  s.row_ptr.push_back(0);
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j)
      if (w(i, j) != 0.0) {
        s.cols.push_back(j);
        s.vals.push_back(w(i, j));
      }
    s.row_ptr.push_back(s.nnz());
  }
  return s;
}

/// Kept by attention_coeffs for the backward pass.
struct CoeffTape {
  nn::MlpTape psi;
  nn::Vector logits;  // per stored entry
};

/// alpha_ij = softmax over j in N_i of psi(x_i, x_j); exact zeros elsewhere.
inline StochasticMatrix attention_coeffs(const AttentionHead& head, const std::vector<std::vector<int>>& neighbors,
                                         const RowMatrix& x, CoeffTape* tape = nullptr) {
  const int n = static_cast<int>(neighbors.size());
  if (x.rows() != n) throw DimensionError("attention_coeffs: X has " + std::to_string(x.rows()) + " rows, graph has " + std::to_string(n));
  if (x.cols() != head.feature_dim()) throw DimensionError("attention_coeffs: feature size does not match the head");
  StochasticMatrix w;
  w.n = n;
  w.row_ptr.reserve(static_cast<std::size_t>(n) + 1);
  w.row_ptr.push_back(0);
  for (int i = 0; i < n; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw PreconditionError("attention_coeffs: node " + std::to_string(i) + " has no neighbors");
    for (int j : nb) w.cols.push_back(j);
    w.row_ptr.push_back(w.nnz());
  }
  const int d = head.feature_dim();
  nn::Matrix pairs(2 * d, w.nnz());
  for (int i = 0; i < n; ++i)
    for (int p = w.row_ptr[static_cast<std::size_t>(i)]; p < w.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      pairs.col(p).head(d) = x.row(i).transpose();
      pairs.col(p).tail(d) = x.row(w.cols[static_cast<std::size_t>(p)]).transpose();
    }
  auto r = head.psi().forward(pairs);
  const nn::Vector logits = r.output.row(0).transpose();
  w.vals.resize(static_cast<std::size_t>(w.nnz()));
  for (int i = 0; i < n; ++i) {
    const int b = w.row_ptr[static_cast<std::size_t>(i)];
    const int e = w.row_ptr[static_cast<std::size_t>(i) + 1];
    const nn::Vector a = nn::softmax(logits.segment(b, e - b));
    for (int p = b; p < e; ++p) w.vals[static_cast<std::size_t>(p)] = a[p - b];
  }
  if (tape) {
    tape->psi = std::move(r.tape);
    tape->logits = logits;
  }
  return w;
}

/// Backward of attention_coeffs: given dL/dW on the pattern, accumulates psi
/// gradients and returns dL/dX through both psi inputs.
inline RowMatrix attention_coeffs_backward(AttentionHead& head, const StochasticMatrix& w, const CoeffTape& tape,
                                           const std::vector<double>& d_vals) {
  nn::Matrix d_logits(1, w.nnz());
  for (int i = 0; i < w.n; ++i) {
    const int b = w.row_ptr[static_cast<std::size_t>(i)];
    const int e = w.row_ptr[static_cast<std::size_t>(i) + 1];
    double dot = 0.0;
    for (int p = b; p < e; ++p) dot += d_vals[static_cast<std::size_t>(p)] * w.vals[static_cast<std::size_t>(p)];
    for (int p = b; p < e; ++p)
      d_logits(0, p) = w.vals[static_cast<std::size_t>(p)] * (d_vals[static_cast<std::size_t>(p)] - dot);
  }
  const nn::Matrix d_pairs = head.psi().backward(tape.psi, d_logits);
  const int d = head.feature_dim();
  RowMatrix dx = RowMatrix::Zero(w.n, d);
  for (int i = 0; i < w.n; ++i)
    for (int p = w.row_ptr[static_cast<std::size_t>(i)]; p < w.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      dx.row(i) += d_pairs.col(p).head(d).transpose();
      dx.row(w.cols[static_cast<std::size_t>(p)]) += d_pairs.col(p).tail(d).transpose();
    }
  return dx;
}

/// One aggregation: x_i' = sum_{j in N_i} alpha_ij x_j.
inline RowMatrix aggregate_step(const StochasticMatrix& w, const RowMatrix& x) { return w.apply(x); }

/// K aggregation steps with a fixed W; K = 0 returns X unchanged.
inline RowMatrix recurrent_aggregate(const StochasticMatrix& w, const RowMatrix& x0, int k) {
  if (k < 0) throw PreconditionError("recurrent_aggregate: K must be >= 0");
  RowMatrix x = x0;
  for (int s = 0; s < k; ++s) x = w.apply(x);
  return x;
}

}  // namespace gam::attention
