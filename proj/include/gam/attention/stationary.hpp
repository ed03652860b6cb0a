#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "gam/attention/stochastic.hpp"
#include "gam/error.hpp"

namespace gam::attention {

/// Per-component left Perron vectors. pi restricted to each component sums
/// to one, so pi as a whole sums to the component count.
struct StationaryResult {
  std::vector<int> component;                 // label per node
  std::vector<std::vector<int>> members;      // nodes per component
  Eigen::VectorXd pi;
  int size() const { return static_cast<int>(members.size()); }
};

/// Components of the undirected support of W.
inline std::vector<std::vector<int>> support_components(const StochasticMatrix& w, std::vector<int>* label = nullptr) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(w.n));
  for (int i = 0; i < w.n; ++i)
    for (int p = w.row_ptr[static_cast<std::size_t>(i)]; p < w.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      if (w.vals[static_cast<std::size_t>(p)] == 0.0) continue;
      const int j = w.cols[static_cast<std::size_t>(p)];
      adj[static_cast<std::size_t>(i)].push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(i);
    }
  std::vector<int> comp(static_cast<std::size_t>(w.n), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < w.n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    const int c = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<int> stack{s};
    comp[static_cast<std::size_t>(s)] = c;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      out.back().push_back(u);
      for (int v : adj[static_cast<std::size_t>(u)])
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = c;
          stack.push_back(v);
        }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  if (label) *label = std::move(comp);
  return out;
}

inline void require_stochastic(const StochasticMatrix& w, double tol = 1e-9) {
  for (double v : w.vals)
    if (!(v >= 0.0) || !std::isfinite(v)) throw PreconditionError("stationary_oracle: W has a negative or non-finite entry");
  if (w.max_row_sum_error() > tol) throw PreconditionError("stationary_oracle: W is not row-stochastic");
}

/// Solves pi^T W = pi^T, sum(pi) = 1 on each component, independently of any
/// aggregation code. Components up to `direct_limit` nodes use a dense LU
/// solve with one balance equation replaced by the normalisation; larger ones
/// use power iteration v <- W^T v from the uniform vector.
inline StationaryResult stationary_oracle(const StochasticMatrix& w, int direct_limit = 2500) {
  require_stochastic(w);
  StationaryResult r;
  r.members = support_components(w, &r.component);
  r.pi = Eigen::VectorXd::Zero(w.n);
  const RowMatrix dense = w.dense();
  for (const auto& mem : r.members) {
    const auto m = static_cast<Eigen::Index>(mem.size());
    Eigen::MatrixXd ws(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) ws(a, b) = dense(mem[static_cast<std::size_t>(a)], mem[static_cast<std::size_t>(b)]);
    Eigen::VectorXd v;
    if (m <= direct_limit) {
      Eigen::MatrixXd a = ws.transpose() - Eigen::MatrixXd::Identity(m, m);
      a.row(m - 1).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
      rhs[m - 1] = 1.0;
      v = a.partialPivLu().solve(rhs);
    } else {
      v = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
      for (int it = 0; it < 1000000; ++it) {
        Eigen::VectorXd next = ws.transpose() * v;
        next /= next.sum();
        const double diff = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (diff < 1e-15) break;
      }
    }
    for (Eigen::Index a = 0; a < m; ++a) r.pi[mem[static_cast<std::size_t>(a)]] = v[a];
  }
  return r;
}

/// The k -> infinity limit of W^k X: row i equals pi_c^T X_c for i's component c.
inline RowMatrix stationary_limit(const StationaryResult& s, const RowMatrix& x0) {
  RowMatrix out(x0.rows(), x0.cols());
  for (const auto& mem : s.members) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x0.cols());
    for (int i : mem) mean += s.pi[i] * x0.row(i);
    for (int i : mem) out.row(i) = mean;
  }
  return out;
}

/// max |pi^T W - pi^T| over all nodes.
inline double stationary_residual(const StochasticMatrix& w, const Eigen::VectorXd& pi) {
  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(w.n);
  for (int i = 0; i < w.n; ++i)
    for (int p = w.row_ptr[static_cast<std::size_t>(i)]; p < w.row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
      lhs[w.cols[static_cast<std::size_t>(p)]] += pi[i] * w.vals[static_cast<std::size_t>(p)];
  return (lhs - pi).cwiseAbs().maxCoeff();
}

}  // namespace gam::attention
