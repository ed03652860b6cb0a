#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "gam/attention/guided.hpp"
#include "gam/attention/stationary.hpp"

namespace gam::attention {

struct ConvergeRow {
  int k = 0;
  double max_row_gap = 0.0;   // ||X^(k+1) - X^(k)||_inf, max over heads
  double gap_to_limit = 0.0;  // ||X^(k) - 1 pi^T X^(0)||_inf, max over heads
  std::vector<double> component_gap;
};

struct ConvergeReport {
  std::vector<ConvergeRow> rows;
  int first_k_below = -1;  // first k whose max_row_gap <= tol
  double final_gap = 0.0;
  double max_stationary_residual = 0.0;
  std::vector<int> component_sizes;
  double tol = 1e-9;
  double limit_tol = 1e-6;

  bool converged() const { return final_gap <= limit_tol; }
};

/// Iterates X <- W X for k = 0..k_max per head (W fixed from X^(0)) and
/// compares against the stationary limit from the independent oracle.
/// Records every `every`-th k plus the last one.
inline ConvergeReport converge_diag(const std::vector<std::vector<int>>& neighbors, const std::vector<AttentionHead>& heads,
                                    const RowMatrix& x0, int k_max, int every = 1, double tol = 1e-9) {
  if (k_max < 0 || every < 1) throw PreconditionError("converge_diag: bad k_max / stride");
  ConvergeReport rep;
  rep.tol = tol;
  const auto nk = static_cast<std::size_t>(k_max) + 1;
  std::vector<double> step_gap(nk, 0.0), limit_gap(nk, 0.0);
  std::vector<std::vector<double>> comp_gap;
  for (const auto& head : heads) {
    const StochasticMatrix w = attention_coeffs(head, neighbors, x0);
    const StationaryResult st = stationary_oracle(w);
    rep.max_stationary_residual = std::max(rep.max_stationary_residual, stationary_residual(w, st.pi));
    if (rep.component_sizes.empty())
      for (const auto& m : st.members) rep.component_sizes.push_back(static_cast<int>(m.size()));
    comp_gap.resize(nk, std::vector<double>(static_cast<std::size_t>(st.size()), 0.0));
    const RowMatrix limit = stationary_limit(st, x0);
    RowMatrix x = x0;
    for (int k = 0; k <= k_max; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const RowMatrix diff = (x - limit).cwiseAbs();
      limit_gap[ks] = std::max(limit_gap[ks], diff.maxCoeff());
      for (int c = 0; c < st.size(); ++c)
        for (int i : st.members[static_cast<std::size_t>(c)])
          comp_gap[ks][static_cast<std::size_t>(c)] = std::max(comp_gap[ks][static_cast<std::size_t>(c)], diff.row(i).maxCoeff());
      RowMatrix next = w.apply(x);
      step_gap[ks] = std::max(step_gap[ks], (next - x).cwiseAbs().maxCoeff());
      x = std::move(next);
    }
  }
  for (int k = 0; k <= k_max; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (rep.first_k_below < 0 && step_gap[ks] <= tol) rep.first_k_below = k;
    if (k % every == 0 || k == k_max) rep.rows.push_back({k, step_gap[ks], limit_gap[ks], comp_gap[ks]});
  }
  rep.final_gap = limit_gap.back();
  return rep;
}

/// CSV: k,max_row_gap,gap_to_limit,component_flags where the flags hold one
/// character per component, '1' when its gap is within limit_tol.
inline void write_converge_csv(std::ostream& os, const ConvergeReport& rep) {
  os << "k,max_row_gap,gap_to_limit,component_flags\n";
  char buf[64];
  for (const auto& r : rep.rows) {
    std::string flags;
    for (double g : r.component_gap) flags += g <= rep.limit_tol ? '1' : '0';
    os << r.k;
    std::snprintf(buf, sizeof buf, ",%.17g", r.max_row_gap);
    os << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", r.gap_to_limit);
    os << buf << ',' << flags << '\n';
  }
}

}  // namespace gam::attention
