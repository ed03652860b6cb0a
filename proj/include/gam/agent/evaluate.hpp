#pragma once

#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "gam/agent/trainer.hpp"

namespace gam::agent {

struct EvalConfig {
  int max_steps = 500;     // success window per start
  int score_steps = 2000;  // length of the scoring run
  int repeats = 1;         // runs per start; the policy samples, so outcomes vary
  bool argmax = false;     // greedy actions instead of sampling from pi
  std::uint64_t seed = 1;
  std::optional<maze::Cell> goal;  // relocated goal; re-localized, no retraining
};

struct EvalOutcome {
  maze::AgentPose start;
  bool success = false;
  int steps = 0;
  std::vector<maze::AgentPose> path;  // oracle poses, start included
};

struct EvalResult {
  double score = 0.0;
  double success_rate = 0.0;
  std::vector<EvalOutcome> outcomes;
  double eta_norm_mean = 0.0;
};

/// Runs the trained agent with eps = 0. For GAM the goal node is localized
/// from the (possibly relocated) goal observation; `mem` heads must already
/// hold the trained parameters.
class Evaluator {
 public:
  Evaluator(std::shared_ptr<const maze::MazeSpec> maze, PolicyNet& net, NavMemory* mem, const EvalConfig& cfg,
            maze::RenderConfig render = {})
      : maze_(std::move(maze)), net_(&net), mem_(mem), cfg_(cfg), render_(render) {
    if (net.variant() == Variant::kGam && !mem) throw PreconditionError("eval: the GAM variant needs a graph and a similarity model");
    if (cfg.max_steps < 1 || cfg.score_steps < 0 || cfg.repeats < 1) throw ConfigError("eval: bad step limits");
    goal_ = cfg.goal ? *cfg.goal : maze_->goal_cell;
    if (!maze_->is_free(goal_)) throw PreconditionError("eval: goal cell is not free");
    goal_obs_ = goal_observation(*maze_, goal_, render_);
    if (mem_) {
      if (!mem_->guided().fresh()) mem_->guided().refresh();
      mem_->set_goal_observation(goal_obs_);
    }
  }

  maze::Cell goal() const { return goal_; }

  EvalResult run(const std::vector<maze::AgentPose>& starts) {
    if (starts.empty()) throw PreconditionError("eval: no start poses");
    EvalResult res;
    std::mt19937_64 rng(memory::detail::mix_seed(cfg_.seed, 0xe7a1));
    maze::MazeEnv env(maze_, render_, memory::detail::mix_seed(cfg_.seed, 0xe7a2), cfg_.max_steps);
    env.set_goal(goal_);
    int ok = 0;
    double eta_sum = 0.0;
    long eta_n = 0;
    for (int rep = 0; rep < cfg_.repeats; ++rep) {
      for (const auto& start : starts) {
        EvalOutcome o;
        o.start = start;
        o.path.push_back(start);
        maze::Observation obs = env.reset_to(start);
        nn::LstmState state = net_->zero_state(1);
        for (int t = 0; t < cfg_.max_steps; ++t) {
          double en = 0.0;
          const int a = choose(obs, state, rng, &en);
          eta_sum += en;
          ++eta_n;
          const auto r = env.step(a);
          ++o.steps;
          if (r.reached_goal) {  // moves into a cell keep the heading
            o.success = true;
            o.path.push_back({goal_, o.path.back().heading});
            break;
          }
          o.path.push_back(r.pose);
          obs = r.observation;
        }
        ok += o.success ? 1 : 0;
        res.outcomes.push_back(std::move(o));
      }
    }
    res.success_rate = static_cast<double>(ok) / static_cast<double>(res.outcomes.size());
    res.eta_norm_mean = eta_n > 0 ? eta_sum / static_cast<double>(eta_n) : 0.0;
    res.score = score_run(rng);
    return res;
  }

  /// Total reward over one score_steps run from a random spawn; the agent
  /// keeps going after every goal hit.
  double score_run(std::mt19937_64& rng) {
    if (cfg_.score_steps == 0) return 0.0;
    maze::MazeEnv env(maze_, render_, memory::detail::mix_seed(cfg_.seed, 0x5c0e), cfg_.score_steps);
    env.set_goal(goal_);
    maze::Observation obs = env.reset();
    nn::LstmState state = net_->zero_state(1);
    double total = 0.0;
    for (int t = 0; t < cfg_.score_steps; ++t) {
      const auto r = env.step(choose(obs, state, rng, nullptr));
      total += r.reward;
      obs = r.observation;
    }
    return total;
  }

 private:
  int choose(const maze::Observation& obs, nn::LstmState& state, std::mt19937_64& rng, double* eta_norm) {
    std::optional<attention::GuidedFeature> g;
    if (net_->variant() == Variant::kGam) {
      g = mem_->feature(mem_->localize(obs));
      if (eta_norm) *eta_norm = g->eta.norm();
    }
    const nn::Vector s = make_state(net_->variant(), obs, g ? &*g : nullptr, &goal_obs_);
    const nn::Matrix out = net_->act(s, state);
    const nn::Vector logits = out.col(0).head(maze::kNumActions);
    if (cfg_.argmax) {
      Eigen::Index best = 0;
      logits.maxCoeff(&best);
      return static_cast<int>(best);
    }
    return select_action(logits, out(maze::kNumActions, 0), 0.0, rng).action;
  }

  std::shared_ptr<const maze::MazeSpec> maze_;
  PolicyNet* net_;
  NavMemory* mem_;
  EvalConfig cfg_;
  maze::RenderConfig render_;
  maze::Cell goal_;
  nn::Vector goal_obs_;
};

/// Spawn poses of every listed cell, facing north.
inline std::vector<maze::AgentPose> poses_facing_north(const std::vector<maze::Cell>& cells) {
  std::vector<maze::AgentPose> out;
  for (const auto& c : cells) out.push_back({c, maze::Heading::kN});
  return out;
}

}  // namespace gam::agent
