#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gam/agent/policy.hpp"
#include "gam/attention/guided.hpp"
#include "gam/maze/env.hpp"
#include "gam/memory/graph.hpp"
#include "gam/memory/similarity.hpp"
#include "gam/nn/optim.hpp"

namespace gam::agent {

struct AgentConfig {
  Variant variant = Variant::kGam;
  double gamma = 0.99;
  double beta = 0.01;
  double eps_start = 0.1;
  double eps_end = 0.02;
  double eps_anneal_fraction = 0.5;  // of total_steps
  int t_h = 20;
  double lr = 2.5e-4;
  double grad_clip = 0.0;  // global norm; 0 disables
  std::int64_t total_steps = 200000;
  int n_workers = 8;
  int hidden = 128;
  int episode_length = maze::kDefaultEpisodeLength;
  int success_window = 500;
  int rolling_window = 100;
  attention::GamConfig gam;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("agent: gamma must lie in (0, 1)");
    if (beta < 0.0) throw ConfigError("agent: beta must be >= 0");
    if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0)
      throw ConfigError("agent: eps values must lie in [0, 1]");
    if (eps_anneal_fraction <= 0.0) throw ConfigError("agent: eps_anneal_fraction must be > 0");
    if (t_h < 1 || n_workers < 1 || hidden < 1) throw ConfigError("agent: t_h, n_workers and hidden must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("agent: lr must be > 0");
    if (grad_clip < 0.0) throw ConfigError("agent: grad_clip must be >= 0");
    if (total_steps < 0) throw ConfigError("agent: total_steps must be >= 0");
    if (episode_length < 1 || success_window < 1 || rolling_window < 1)
      throw ConfigError("agent: episode_length, success_window and rolling_window must be >= 1");
  }

  double eps_at(std::int64_t step) const {
    const double span = eps_anneal_fraction * static_cast<double>(total_steps);
    const double f = span > 0.0 ? std::min(1.0, static_cast<double>(step) / span) : 1.0;
    return eps_start + (eps_end - eps_start) * f;
  }
};

/// The goal-directed memory of the GAM variant: similarity model, graph,
/// trainable attention heads and the localized goal node.
class NavMemory {
 public:
  NavMemory(std::shared_ptr<const memory::SimilarityModel> model, std::shared_ptr<const memory::TopoGraph> graph,
            const attention::GamConfig& cfg, double eta_scale = 1.0)
      : model_(std::move(model)), graph_(std::move(graph)),
        guided_(attention::GuidedAttention::from_graph(*graph_, cfg)),
        localizer_(*model_, *graph_, cfg.l_loc),
        eta_scale_(eta_scale) {}
  NavMemory(const NavMemory&) = delete;
  NavMemory& operator=(const NavMemory&) = delete;

  attention::GuidedAttention& guided() { return guided_; }
  const attention::GuidedAttention& guided() const { return guided_; }
  const memory::TopoGraph& graph() const { return *graph_; }
  const memory::SimilarityModel& model() const { return *model_; }

  int localize(const nn::Vector& obs) { return localizer_(obs); }

  /// Localizes the goal from its observation alone.
  void set_goal_observation(const nn::Vector& goal_obs) { goal_node_ = localizer_(goal_obs); }
  int goal_node() const {
    if (goal_node_ < 0) throw PreconditionError("gam: goal node not localized");
    return goal_node_;
  }

  /// eta(cur, goal) times eta_scale, the form the policy sees.
  attention::GuidedFeature feature(int cur) const {
    auto g = guided_.eta(cur, goal_node());
    g.eta *= eta_scale_;
    return g;
  }
  /// Adds dL/d(feature(cur)).
  void accumulate(int cur, const nn::Vector& d_feature) { guided_.accumulate(cur, goal_node(), eta_scale_ * d_feature); }
  double eta_scale() const { return eta_scale_; }

 private:
  std::shared_ptr<const memory::SimilarityModel> model_;
  std::shared_ptr<const memory::TopoGraph> graph_;
  attention::GuidedAttention guided_;
  attention::Localizer localizer_;
  int goal_node_ = -1;
  double eta_scale_;
};

/// Observation of the goal cell as the goal image: facing north, noise-free.
inline nn::Vector goal_observation(const maze::MazeSpec& m, maze::Cell goal, const maze::RenderConfig& render) {
  return maze::render_clean(m, {goal, maze::Heading::kN}, render);
}

inline int state_size(Variant v, int obs_dim, const NavMemory* mem) {
  switch (v) {
    case Variant::kGam:
      if (!mem) throw PreconditionError("the GAM variant needs a graph and a similarity model");
      return obs_dim + mem->guided().eta_size();
    case Variant::kFfGoal: return 2 * obs_dim;
    default: return obs_dim;
  }
}

struct MetricsRow {
  std::int64_t step = 0;
  double episode_reward = 0.0;
  double success_rolling = 0.0;
  double policy_entropy = 0.0;
  double value_loss = 0.0;
  double eta_norm_mean = 0.0;
  // Not written to the CSV; kept for bookkeeping checks.
  int goals = 0;
  int episode_steps = 0;
};

inline void write_metrics_header(std::ostream& os) {
  os << "step,episode_reward,success_rolling,policy_entropy,value_loss,eta_norm_mean\n";
}

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step),
                r.episode_reward, r.success_rolling, r.policy_entropy, r.value_loss, r.eta_norm_mean);
  os << buf;
}

/// Loss on a recorded rollout (inputs[t] holds one column per worker). With
/// `backprop`, accumulates policy gradients and hands dL/d(eta part of the
/// state) for step t, worker w to `eta_sink(nodes[t][w], grad)`; the eta part
/// is the trailing `eta_size` rows. `advantages` fixes A instead of R - V.
inline A2cTerms rollout_loss(PolicyNet& net, const std::vector<nn::Matrix>& inputs, const nn::LstmState& init,
                             const std::vector<std::vector<std::uint8_t>>& reset, const std::vector<int>& actions,
                             const std::vector<double>& returns, double beta, bool backprop, int eta_size = 0,
                             const std::vector<std::vector<int>>* nodes = nullptr,
                             const std::function<void(int, const nn::Vector&)>& eta_sink = {},
                             const std::vector<double>* advantages = nullptr) {
  SeqTape tape;
  const nn::Matrix out = net.forward_seq(inputs, init, reset, backprop ? &tape : nullptr);
  nn::Matrix d_logits;
  nn::Vector d_values;
  const A2cTerms terms = a2c_loss(out.topRows(maze::kNumActions), out.row(maze::kNumActions).transpose(), actions,
                                  returns, beta, backprop ? &d_logits : nullptr, backprop ? &d_values : nullptr,
                                  advantages);
  if (!backprop) return terms;
  nn::Matrix d_out(kOutputRows, out.cols());
  d_out.topRows(maze::kNumActions) = d_logits;
  d_out.row(maze::kNumActions) = d_values.transpose();
  const nn::Matrix d_in = net.backward_seq(tape, d_out, reset);
  if (eta_size > 0 && eta_sink) {
    if (!nodes) throw PreconditionError("rollout_loss: eta gradients need node ids");
    const auto b = inputs.front().cols();
    for (std::size_t t = 0; t < inputs.size(); ++t)
      for (Eigen::Index w = 0; w < b; ++w)
        eta_sink((*nodes)[t][static_cast<std::size_t>(w)],
                 d_in.col(static_cast<Eigen::Index>(t) * b + w).tail(eta_size));
  }
  return terms;
}

/// Synchronous A2C over n_workers environments stepped in lock-step. Every
/// t_h steps the batched rollout gives one loss evaluation and one RMSProp
/// step on the policy network and (GAM) the attention heads.
class A2cTrainer {
 public:
  A2cTrainer(std::shared_ptr<const maze::MazeSpec> maze, const AgentConfig& cfg, std::uint64_t seed,
             NavMemory* mem = nullptr, maze::RenderConfig render = {})
      : maze_(std::move(maze)), cfg_(cfg), seed_(seed), mem_(mem), render_(render) {
    cfg_.validate();
    if (cfg_.variant == Variant::kGam && !mem_)
      throw PreconditionError("train: the GAM variant needs a graph and a similarity model");
    obs_dim_ = render_.feature_size();
    goal_obs_ = goal_observation(*maze_, maze_->goal_cell, render_);
    net_ = PolicyNet(cfg_.variant, state_size(cfg_.variant, obs_dim_, mem_), cfg_.hidden);
    net_.init(memory::detail::mix_seed(seed, 0xa11));
    if (uses_gam()) {
      mem_->guided().init(memory::detail::mix_seed(seed, 0xa77));
      mem_->guided().refresh();
      mem_->set_goal_observation(goal_obs_);
    }
    for (int w = 0; w < cfg_.n_workers; ++w) {
      const auto ws = static_cast<std::uint64_t>(w);
      workers_.push_back(Worker{maze::MazeEnv(maze_, render_, memory::detail::mix_seed(seed, 0xe000 + ws), cfg_.episode_length),
                                std::mt19937_64(memory::detail::mix_seed(seed, 0xc000 + ws)), {}});
      auto& wk = workers_.back();
      wk.obs = wk.env.reset();
    }
    lstm_state_ = net_.zero_state(cfg_.n_workers);
  }

  PolicyNet& net() { return net_; }
  const AgentConfig& config() const { return cfg_; }
  std::int64_t steps_done() const { return steps_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  double success_rolling() const { return rolling_mean(); }
  std::int64_t goal_events() const { return goal_events_; }

  /// Trains until total_steps env steps (summed over workers) have been taken;
  /// writes one metrics row per finished episode to `csv` when given.
  void run(std::ostream* csv = nullptr) {
    while (steps_ + cfg_.n_workers <= cfg_.total_steps) {
      const std::size_t before = metrics_.size();
      update();
      if (csv)
        for (std::size_t i = before; i < metrics_.size(); ++i) write_metrics_row(*csv, metrics_[i]);
    }
  }

  void export_to(std::vector<nn::NamedTensor>& out, bool with_optimizer) const {
    net_.export_to(out, with_optimizer);
    if (uses_gam()) mem_->guided().export_to(out, with_optimizer);
  }

 private:
  struct Worker {
    maze::MazeEnv env;
    std::mt19937_64 rng;
    maze::Observation obs;
    double episode_reward = 0.0;
    double eta_norm_sum = 0.0;
    int episode_steps = 0;
    int episode_goals = 0;
    int since_spawn = 0;
    bool attempt_scored = false;
  };

  bool uses_gam() const { return cfg_.variant == Variant::kGam; }

  nn::Matrix build_states(std::vector<int>* nodes, bool record_eta = true) {
    const int n = static_cast<int>(workers_.size());
    nn::Matrix s(net_.input_dim(), n);
    if (nodes) nodes->assign(workers_.size(), -1);
    for (int w = 0; w < n; ++w) {
      auto& wk = workers_[static_cast<std::size_t>(w)];
      std::optional<attention::GuidedFeature> g;
      if (uses_gam()) {
        const int node = mem_->localize(wk.obs);
        g = mem_->feature(node);
        if (nodes) (*nodes)[static_cast<std::size_t>(w)] = node;
        if (record_eta) wk.eta_norm_sum += g->eta.norm();
      }
      s.col(w) = make_state(cfg_.variant, wk.obs, g ? &*g : nullptr, &goal_obs_);
    }
    return s;
  }

  nn::Vector single_state(const maze::Observation& obs) {
    std::optional<attention::GuidedFeature> g;
    if (uses_gam()) g = mem_->feature(mem_->localize(obs));
    return make_state(cfg_.variant, obs, g ? &*g : nullptr, &goal_obs_);
  }

  double rolling_mean() const {
    if (outcomes_.empty()) return 0.0;
    double s = 0.0;
    for (int o : outcomes_) s += o;
    return s / static_cast<double>(outcomes_.size());
  }

  void push_outcome(int success) {
    outcomes_.push_back(success);
    if (static_cast<int>(outcomes_.size()) > cfg_.rolling_window) outcomes_.pop_front();
  }

  void update() {
    const int nw = cfg_.n_workers;
    const int th = cfg_.t_h;
    std::vector<nn::Matrix> inputs;
    std::vector<std::vector<int>> nodes(static_cast<std::size_t>(th));
    std::vector<std::vector<std::uint8_t>> reset(static_cast<std::size_t>(th), std::vector<std::uint8_t>(static_cast<std::size_t>(nw), 0));
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<StepEnd> ends;
    std::vector<double> trunc_value;
    const nn::LstmState init_state = lstm_state_;
    std::vector<std::uint8_t> pending_reset = pending_reset_;
    pending_reset.resize(static_cast<std::size_t>(nw), 0);

    int t = 0;
    for (; t < th && steps_ + nw <= cfg_.total_steps; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      reset[ts] = pending_reset;
      for (int w = 0; w < nw; ++w)
        if (pending_reset[static_cast<std::size_t>(w)]) {
          lstm_state_.hidden.col(w).setZero();
          lstm_state_.cell.col(w).setZero();
        }
      std::fill(pending_reset.begin(), pending_reset.end(), 0);

      nn::Matrix s = build_states(&nodes[ts]);
      const nn::Matrix out = net_.act(s, lstm_state_);
      const double eps = cfg_.eps_at(steps_);
      for (int w = 0; w < nw; ++w) {
        auto& wk = workers_[static_cast<std::size_t>(w)];
        const ActionChoice c =
            select_action(out.col(w).head(maze::kNumActions), out(maze::kNumActions, w), eps, wk.rng);
        const maze::StepResult r = wk.env.step(c.action);
        actions.push_back(c.action);
        rewards.push_back(r.reward);
        wk.episode_reward += r.reward;
        ++wk.episode_steps;
        ++wk.since_spawn;
        StepEnd end = StepEnd::kNone;
        double tv = 0.0;
        if (r.reached_goal) {
          ++goal_events_;
          ++wk.episode_goals;
          if (!wk.attempt_scored) push_outcome(wk.since_spawn <= cfg_.success_window ? 1 : 0);
          wk.since_spawn = 0;
          wk.attempt_scored = false;
          end = StepEnd::kTerminal;
        } else if (!wk.attempt_scored && wk.since_spawn >= cfg_.success_window) {
          push_outcome(0);
          wk.attempt_scored = true;
        }
        wk.obs = r.observation;
        if (r.episode_done) {
          if (end != StepEnd::kTerminal) {
            end = StepEnd::kTruncated;
            nn::LstmState probe = lstm_state_;
            if (net_.recurrent()) {
              probe.hidden = lstm_state_.hidden.col(w);
              probe.cell = lstm_state_.cell.col(w);
            } else {
              probe = net_.zero_state(1);
            }
            tv = net_.act(single_state(wk.obs), probe)(maze::kNumActions, 0);
          }
          finish_episode(wk);
          wk.obs = wk.env.reset();
          pending_reset[static_cast<std::size_t>(w)] = 1;
        }
        ends.push_back(end);
        trunc_value.push_back(tv);
      }
      inputs.push_back(std::move(s));
      steps_ += nw;
    }
    if (t == 0) {
      steps_ = cfg_.total_steps;  // fewer steps left than workers
      return;
    }
    reset.resize(static_cast<std::size_t>(t));
    pending_reset_ = pending_reset;

    // Bootstrap from the state after the last step (before any pending reset).
    nn::LstmState probe = lstm_state_;
    const nn::Matrix boot = net_.act(build_states(nullptr, false), probe);

    // Per-worker returns; columns are step-major (t * nw + w).
    std::vector<double> returns(rewards.size());
    for (int w = 0; w < nw; ++w) {
      std::vector<double> rw, tw;
      std::vector<StepEnd> ew;
      for (int k = 0; k < t; ++k) {
        const auto idx = static_cast<std::size_t>(k * nw + w);
        rw.push_back(rewards[idx]);
        ew.push_back(ends[idx]);
        tw.push_back(trunc_value[idx]);
      }
      const auto rt = compute_returns(rw, ew, tw, cfg_.gamma, boot(maze::kNumActions, w));
      for (int k = 0; k < t; ++k) returns[static_cast<std::size_t>(k * nw + w)] = rt[static_cast<std::size_t>(k)];
    }

    std::vector<nn::ParamStore*> stores = net_.param_stores();
    for (auto* st : stores) st->zero_grad();
    std::function<void(int, const nn::Vector&)> sink;
    if (uses_gam()) {
      for (auto* st : mem_->guided().param_stores()) {
        st->zero_grad();
        stores.push_back(st);
      }
      sink = [&](int node, const nn::Vector& d) { mem_->accumulate(node, d); };
    }
    const A2cTerms terms = rollout_loss(net_, inputs, init_state, reset, actions, returns, cfg_.beta, true,
                                        uses_gam() ? mem_->guided().eta_size() : 0, &nodes, sink);
    if (uses_gam()) mem_->guided().backward();
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto* st : stores) sq += st->grad_squared_norm();
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip)
        for (auto* st : stores) st->scale_grads(cfg_.grad_clip / norm);
    }
    for (auto* st : stores) nn::rmsprop_step(*st, cfg_.lr);
    if (uses_gam()) mem_->guided().refresh();
    last_entropy_ = terms.entropy;
    last_value_loss_ = terms.value;
  }

  void finish_episode(Worker& wk) {
    MetricsRow row;
    row.step = steps_ + cfg_.n_workers;
    row.episode_reward = wk.episode_reward;
    row.success_rolling = rolling_mean();
    row.policy_entropy = last_entropy_;
    row.value_loss = last_value_loss_;
    row.eta_norm_mean = wk.episode_steps > 0 ? wk.eta_norm_sum / wk.episode_steps : 0.0;
    row.goals = wk.episode_goals;
    row.episode_steps = wk.episode_steps;
    metrics_.push_back(row);
    wk.episode_reward = 0.0;
    wk.eta_norm_sum = 0.0;
    wk.episode_steps = 0;
    wk.episode_goals = 0;
    wk.since_spawn = 0;
    wk.attempt_scored = false;
  }

  std::shared_ptr<const maze::MazeSpec> maze_;
  AgentConfig cfg_;
  std::uint64_t seed_;
  NavMemory* mem_;
  maze::RenderConfig render_;
  int obs_dim_ = 0;
  nn::Vector goal_obs_;
  PolicyNet net_;
  std::vector<Worker> workers_;
  nn::LstmState lstm_state_;
  std::vector<std::uint8_t> pending_reset_;
  std::vector<MetricsRow> metrics_;
  std::deque<int> outcomes_;
  std::int64_t steps_ = 0;
  std::int64_t goal_events_ = 0;
  double last_entropy_ = 0.0;
  double last_value_loss_ = 0.0;
};

}  // namespace gam::agent
