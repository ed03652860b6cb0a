#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gam/attention/stochastic.hpp"
#include "gam/error.hpp"
#include "gam/memory/graph.hpp"
#include "gam/memory/similarity.hpp"
#include "gam/nn/checkpoint.hpp"

namespace gam::attention {

struct GamConfig {
  int heads = 4;
  int k = 3;
  int l_loc = 5;
  // Recompute psi on the aggregated features at every iteration instead of
  // reusing W from X^[0].
  bool dynamic_w = false;
};

struct GuidedFeature {
  nn::Vector eta;
  int k_used = 0;
  bool cross_component = false;  // cur and goal lie in different components
};

/// Trainable guided-attention block: the graph, the frozen node features X
/// and H attention heads. refresh() caches every head's W and X^(K); eta()
/// reads rows of the cache; gradients w.r.t. eta are collected with
/// accumulate() and pushed into the heads by backward().
class GuidedAttention {
 public:
  GuidedAttention() = default;
  GuidedAttention(std::vector<std::vector<int>> neighbors, RowMatrix x, const GamConfig& cfg)
      : cfg_(cfg), neighbors_(std::move(neighbors)), x0_(std::move(x)) {
    if (cfg.heads < 1) throw ConfigError("gam: heads must be >= 1");
    if (cfg.k < 0) throw ConfigError("gam: K must be >= 0");
    if (static_cast<std::size_t>(x0_.rows()) != neighbors_.size()) throw DimensionError("gam: X rows differ from node count");
    for (int h = 0; h < cfg.heads; ++h) heads_.emplace_back(static_cast<int>(x0_.cols()));
    component_ = components_of(neighbors_);
  }

  static GuidedAttention from_graph(const memory::TopoGraph& g, const GamConfig& cfg) {
    return GuidedAttention(g.neighbors, g.features, cfg);
  }

  const GamConfig& config() const { return cfg_; }
  void set_k(int k) {
    if (k < 0) throw ConfigError("gam: K must be >= 0");
    cfg_.k = k;
    fresh_ = false;
  }
  int size() const { return static_cast<int>(x0_.rows()); }
  int feature_dim() const { return static_cast<int>(x0_.cols()); }
  int eta_size() const { return cfg_.heads * feature_dim(); }
  const RowMatrix& features() const { return x0_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  std::vector<AttentionHead>& heads() { return heads_; }
  const std::vector<AttentionHead>& heads() const { return heads_; }
  int component(int node) const { return component_.at(static_cast<std::size_t>(node)); }

  std::vector<nn::ParamStore*> param_stores() {
    std::vector<nn::ParamStore*> out;
    for (auto& h : heads_) out.push_back(&h.params());
    return out;
  }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    for (auto& h : heads_) h.params().init_glorot(rng);
    fresh_ = false;
  }

  /// Recomputes W and X^(0..K) for every head from the current parameters.
  void refresh() {
    cache_.assign(heads_.size(), {});
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      auto& c = cache_[h];
      c.x.push_back(x0_);
      for (int s = 0; s < cfg_.k; ++s) {
        if (s == 0 || cfg_.dynamic_w) {
          c.tapes.emplace_back();
          c.w.push_back(attention_coeffs(heads_[h], neighbors_, c.x.back(), &c.tapes.back()));
        }
        c.x.push_back(c.w.back().apply(c.x.back()));
      }
      if (c.w.empty()) {  // K = 0 still exposes W for diagnostics
        c.tapes.emplace_back();
        c.w.push_back(attention_coeffs(heads_[h], neighbors_, x0_, &c.tapes.back()));
      }
      c.grad = RowMatrix::Zero(x0_.rows(), x0_.cols());
    }
    fresh_ = true;
  }

  void mark_stale() { fresh_ = false; }
  bool fresh() const { return fresh_; }

  const StochasticMatrix& w(int head) const {
    require_fresh();
    return cache_.at(static_cast<std::size_t>(head)).w.front();
  }
  /// X^(K) of one head.
  const RowMatrix& aggregated(int head) const {
    require_fresh();
    return cache_.at(static_cast<std::size_t>(head)).x.back();
  }

  GuidedFeature eta(int cur, int goal) const {
    require_fresh();
    check_node(cur);
    check_node(goal);
    GuidedFeature g;
    g.k_used = cfg_.k;
    g.cross_component = component(cur) != component(goal);
    const int d = feature_dim();
    g.eta.resize(eta_size());
    for (std::size_t h = 0; h < cache_.size(); ++h) {
      const RowMatrix& xk = cache_[h].x.back();
      g.eta.segment(static_cast<Eigen::Index>(h) * d, d) = (xk.row(cur) - xk.row(goal)).transpose();
    }
    return g;
  }

  /// Adds dL/d(eta(cur, goal)) to the pending gradient.
  void accumulate(int cur, int goal, const nn::Vector& d_eta) {
    require_fresh();
    if (d_eta.size() != eta_size()) throw DimensionError("gam: eta gradient has the wrong size");
    if (cur == goal) return;
    const int d = feature_dim();
    for (std::size_t h = 0; h < cache_.size(); ++h) {
      const auto seg = d_eta.segment(static_cast<Eigen::Index>(h) * d, d).transpose();
      cache_[h].grad.row(cur) += seg;
      cache_[h].grad.row(goal) -= seg;
    }
  }

  /// Backpropagates the pending gradient through the K aggregation steps and
  /// the softmax into psi, then clears it. Node features stay frozen.
  void backward() {
    require_fresh();
    for (std::size_t h = 0; h < cache_.size(); ++h) {
      auto& c = cache_[h];
      if (c.grad.isZero(0.0)) continue;
      RowMatrix g = c.grad;
      const int k = cfg_.k;
      std::vector<double> dw_fixed;
      if (!cfg_.dynamic_w) dw_fixed.assign(c.w.front().vals.size(), 0.0);
      for (int s = k - 1; s >= 0; --s) {
        const StochasticMatrix& w = cfg_.dynamic_w ? c.w[static_cast<std::size_t>(s)] : c.w.front();
        const RowMatrix& xs = c.x[static_cast<std::size_t>(s)];
        std::vector<double> dw_local;
        std::vector<double>& dw = cfg_.dynamic_w ? dw_local : dw_fixed;
        if (cfg_.dynamic_w) dw.assign(w.vals.size(), 0.0);
        for (int i = 0; i < w.n; ++i)
          for (int p = w.row_ptr[static_cast<std::size_t>(i)]; p < w.row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
            dw[static_cast<std::size_t>(p)] += g.row(i).dot(xs.row(w.cols[static_cast<std::size_t>(p)]));
        RowMatrix g_prev = w.apply_transpose(g);
        if (cfg_.dynamic_w) {
          RowMatrix dx = attention_coeffs_backward(heads_[h], w, c.tapes[static_cast<std::size_t>(s)], dw);
          if (s > 0) g_prev += dx;
        }
        g = std::move(g_prev);
      }
      if (!cfg_.dynamic_w && k > 0) attention_coeffs_backward(heads_[h], c.w.front(), c.tapes.front(), dw_fixed);
      c.grad.setZero();
    }
  }

  void export_to(std::vector<nn::NamedTensor>& out, bool with_optimizer) const {
    for (std::size_t h = 0; h < heads_.size(); ++h)
      nn::export_store(heads_[h].params(), "gam/head" + std::to_string(h) + "/", out, with_optimizer);
  }
  void import_from(const std::vector<nn::NamedTensor>& tensors) {
    for (std::size_t h = 0; h < heads_.size(); ++h)
      nn::import_store(heads_[h].params(), "gam/head" + std::to_string(h) + "/", tensors);
    fresh_ = false;
  }

 private:
  struct HeadCache {
    std::vector<StochasticMatrix> w;
    std::vector<CoeffTape> tapes;
    std::vector<RowMatrix> x;  // X^(0..K)
    RowMatrix grad;            // pending dL/dX^(K)
  };

  static std::vector<int> components_of(const std::vector<std::vector<int>>& nb) {
    std::vector<int> comp(nb.size(), -1);
    int c = 0;
    for (std::size_t s = 0; s < nb.size(); ++s) {
      if (comp[s] >= 0) continue;
      std::vector<std::size_t> stack{s};
      comp[s] = c;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (int v : nb[u])
          if (comp[static_cast<std::size_t>(v)] < 0) {
            comp[static_cast<std::size_t>(v)] = c;
            stack.push_back(static_cast<std::size_t>(v));
          }
      }
      ++c;
    }
    return comp;
  }

  void require_fresh() const {
    if (!fresh_) throw PreconditionError("gam: call refresh() after changing attention parameters");
  }
  void check_node(int i) const {
    if (i < 0 || i >= size()) throw PreconditionError("gam: invalid node id " + std::to_string(i));
  }

  GamConfig cfg_;
  std::vector<std::vector<int>> neighbors_;
  RowMatrix x0_;
  std::vector<AttentionHead> heads_;
  std::vector<int> component_;
  std::vector<HeadCache> cache_;
  bool fresh_ = false;
};

/// One-shot eta for given heads: W_h from X, K aggregation steps, row
/// difference per head, concatenated.
inline GuidedFeature guided_feature(const std::vector<AttentionHead>& heads, const memory::TopoGraph& graph,
                                    const RowMatrix& x, int cur, int goal, int k) {
  if (k < 0) throw PreconditionError("guided_feature: K must be >= 0");
  if (cur < 0 || goal < 0 || cur >= graph.size() || goal >= graph.size())
    throw PreconditionError("guided_feature: invalid node id");
  const int d = static_cast<int>(x.cols());
  GuidedFeature g;
  g.k_used = k;
  const auto comp = graph.components();
  g.cross_component = comp[static_cast<std::size_t>(cur)] != comp[static_cast<std::size_t>(goal)];
  g.eta.resize(static_cast<Eigen::Index>(heads.size()) * d);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const StochasticMatrix w = attention_coeffs(heads[h], graph.neighbors, x);
    const RowMatrix xk = recurrent_aggregate(w, x, k);
    g.eta.segment(static_cast<Eigen::Index>(h) * d, d) = (xk.row(cur) - xk.row(goal)).transpose();
  }
  return g;
}

// ---- localization ----------------------------------------------------------

/// Median of the top-L similarity scores. `scores[k]` is phi(obs, node k).
/// Ranks by (score desc, id asc); among top-L nodes whose score equals the
/// median score, the lowest id wins.
inline int localize_scores(const nn::Vector& scores, int l_loc) {
  const int n = static_cast<int>(scores.size());
  if (n == 0) throw PreconditionError("localize: empty graph");
  if (l_loc < 1 || l_loc > n || l_loc % 2 == 0)
    throw PreconditionError("localize: L_loc must be odd and in [1, N], got " + std::to_string(l_loc));
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto better = [&](int a, int b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  std::partial_sort(idx.begin(), idx.begin() + l_loc, idx.end(), better);
  const double med = scores[idx[static_cast<std::size_t>(l_loc / 2)]];
  int best = n;
  for (int r = 0; r < l_loc; ++r)
    if (scores[idx[static_cast<std::size_t>(r)]] == med) best = std::min(best, idx[static_cast<std::size_t>(r)]);
  return best;
}

/// Localizes an observation on the graph from observations alone.
inline int localize(const memory::SimilarityModel& model, const memory::TopoGraph& graph, const nn::Vector& obs,
                    int l_loc) {
  if (graph.size() == 0) throw PreconditionError("localize: empty graph");
  return localize_scores(model.prob_against(model.embed(obs), graph.features), l_loc);
}

/// localize() with results memoised on the exact observation bytes.
class Localizer {
 public:
  Localizer(const memory::SimilarityModel& model, const memory::TopoGraph& graph, int l_loc)
      : model_(&model), graph_(&graph), l_loc_(l_loc) {
    if (l_loc < 1 || l_loc > graph.size() || l_loc % 2 == 0)
      throw ConfigError("localize: L_loc must be odd and in [1, N]");
  }

  int operator()(const nn::Vector& obs) {
    std::string key(reinterpret_cast<const char*>(obs.data()), sizeof(double) * static_cast<std::size_t>(obs.size()));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const int node = localize(*model_, *graph_, obs, l_loc_);
    cache_.emplace(std::move(key), node);
    return node;
  }

  std::size_t cache_size() const { return cache_.size(); }

 private:
  const memory::SimilarityModel* model_;
  const memory::TopoGraph* graph_;
  int l_loc_;
  std::unordered_map<std::string, int> cache_;
};

}  // namespace gam::attention
