#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gam/attention/guided.hpp"
#include "gam/error.hpp"
#include "gam/maze/maze.hpp"
#include "gam/nn/functional.hpp"

namespace gam::agent {

enum class Variant { kGam, kFf, kFfGoal, kLstm };

inline Variant parse_variant(const std::string& s) {
  if (s == "gam") return Variant::kGam;
  if (s == "ff" || s == "ff-nogoal") return Variant::kFf;
  if (s == "ff-goal") return Variant::kFfGoal;
  if (s == "lstm" || s == "lstm-nogoal") return Variant::kLstm;
  throw ConfigError("unknown variant '" + s + "' (expected gam, ff, ff-goal or lstm)");
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kGam: return "gam";
    case Variant::kFf: return "ff";
    case Variant::kFfGoal: return "ff-goal";
    case Variant::kLstm: return "lstm";
  }
  return "?";
}

/// s = [o, eta] for GAM, [o, o_goal] for FF-goal, o otherwise.
inline nn::Vector make_state(Variant v, const nn::Vector& obs, const attention::GuidedFeature* guided,
                             const nn::Vector* goal_obs) {
  switch (v) {
    case Variant::kGam: {
      if (!guided) throw PreconditionError("make_state: the GAM variant needs a guided feature");
      nn::Vector s(obs.size() + guided->eta.size());
      s << obs, guided->eta;
      return s;
    }
    case Variant::kFfGoal: {
      if (!goal_obs) throw PreconditionError("make_state: ff-goal needs the goal observation");
      nn::Vector s(obs.size() + goal_obs->size());
      s << obs, *goal_obs;
      return s;
    }
    case Variant::kFf:
    case Variant::kLstm: return obs;
  }
  return obs;
}

struct ActionChoice {
  int action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

/// Epsilon-greedy over the softmax policy: with probability eps a uniform
/// action, otherwise a draw from pi. log_prob and entropy always refer to pi.
template <class Urbg>
ActionChoice select_action(const nn::Vector& logits, double value, double eps, Urbg& rng) {
  if (eps < 0.0 || eps > 1.0) throw PreconditionError("select_action: eps must lie in [0, 1]");
  const nn::Vector logp = nn::log_softmax(logits);
  const nn::Vector p = logp.array().exp().matrix();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ActionChoice c;
  if (eps > 0.0 && u01(rng) < eps) {
    c.action = std::uniform_int_distribution<int>(0, static_cast<int>(logits.size()) - 1)(rng);
  } else {
    const double r = u01(rng);
    double acc = 0.0;
    c.action = static_cast<int>(logits.size()) - 1;
    for (Eigen::Index a = 0; a < p.size(); ++a) {
      acc += p[a];
      if (r < acc) {
        c.action = static_cast<int>(a);
        break;
      }
    }
  }
  c.log_prob = logp[c.action];
  c.entropy = nn::entropy(p);
  c.value = value;
  return c;
}

/// How a rollout step ended. kTerminal: the goal was reached (no bootstrap
/// across the respawn). kTruncated: the episode hit its length limit; the
/// return bootstraps from the value of the final state.
enum class StepEnd { kNone, kTerminal, kTruncated };

/// R_t = r_t + gamma * R_{t+1}, with R_T = bootstrap, R_{t+1} := 0 after a
/// terminal step and := truncation_value[t] after a truncated one.
inline std::vector<double> compute_returns(const std::vector<double>& rewards, const std::vector<StepEnd>& ends,
                                           const std::vector<double>& truncation_value, double gamma,
                                           double bootstrap) {
  if (ends.size() != rewards.size() || truncation_value.size() != rewards.size())
    throw PreconditionError("compute_returns: inconsistent rollout lengths");
  std::vector<double> r(rewards.size());
  double next = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (ends[i] == StepEnd::kTerminal) next = 0.0;
    else if (ends[i] == StepEnd::kTruncated) next = truncation_value[i];
    r[i] = rewards[i] + gamma * next;
    next = r[i];
  }
  return r;
}

inline std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma, double bootstrap,
                                           bool terminal_at_end = false) {
  std::vector<StepEnd> ends(rewards.size(), StepEnd::kNone);
  if (terminal_at_end && !ends.empty()) ends.back() = StepEnd::kTerminal;
  return compute_returns(rewards, ends, std::vector<double>(rewards.size(), 0.0), gamma, bootstrap);
}

struct A2cTerms {
  double loss = 0.0;
  double policy = 0.0;   // mean of -log pi(a) * A
  double value = 0.0;    // mean of (R - V)^2
  double entropy = 0.0;  // mean H(pi)
};

/// Mean over the batch of -log pi(a|s) * A + (R - V)^2 - beta * H(pi). A is
/// R - V held constant (pass `advantages` to fix it from elsewhere). With
/// d_logits / d_values set, writes dLoss/dlogits (7 x B) and dLoss/dV (B).
inline A2cTerms a2c_loss(const nn::Matrix& logits, const nn::Vector& values, const std::vector<int>& actions,
                         const std::vector<double>& returns, double beta, nn::Matrix* d_logits = nullptr,
                         nn::Vector* d_values = nullptr, const std::vector<double>* advantages = nullptr) {
  const auto b = logits.cols();
  if (values.size() != b || static_cast<Eigen::Index>(actions.size()) != b || static_cast<Eigen::Index>(returns.size()) != b ||
      (advantages && static_cast<Eigen::Index>(advantages->size()) != b))
    throw PreconditionError("a2c_loss: inconsistent batch sizes");
  if (b == 0) throw PreconditionError("a2c_loss: empty batch");
  A2cTerms t;
  const double inv = 1.0 / static_cast<double>(b);
  if (d_logits) d_logits->resize(logits.rows(), b);
  if (d_values) d_values->resize(b);
  for (Eigen::Index c = 0; c < b; ++c) {
    const nn::Vector logp = nn::log_softmax(logits.col(c));
    const nn::Vector p = logp.array().exp().matrix();
    const double h = nn::entropy(p);
    const int a = actions[static_cast<std::size_t>(c)];
    const double ret = returns[static_cast<std::size_t>(c)];
    const double adv = advantages ? (*advantages)[static_cast<std::size_t>(c)] : ret - values[c];
    const double diff = ret - values[c];
    t.policy += -logp[a] * adv * inv;
    t.value += diff * diff * inv;
    t.entropy += h * inv;
    if (d_logits) {
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double onehot = k == a ? 1.0 : 0.0;
        // d(-log p_a)/dz_k = p_k - [k=a]; d(-H)/dz_k = p_k (log p_k + H)
        (*d_logits)(k, c) = inv * ((p[k] - onehot) * adv + beta * p[k] * (logp[k] + h));
      }
    }
    if (d_values) (*d_values)[c] = inv * (-2.0 * diff);
  }
  t.loss = t.policy + t.value - beta * t.entropy;
  if (!std::isfinite(t.loss)) throw NumericalError("a2c_loss: non-finite loss");
  return t;
}

}  // namespace gam::agent
