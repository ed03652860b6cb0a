#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gam/agent/evaluate.hpp"
#include "gam/maze/explore.hpp"
#include "gam/memory/graph.hpp"

#ifndef GAM_DATA_DIR
#define GAM_DATA_DIR "data"
#endif

namespace gam::harness {

struct DiagConfig {
  int k_max = 10000;
  int every = 100;
  double tol = 1e-9;
};

struct SweepConfig {
  std::vector<int> k_values{0, 1, 2, 3, 5, 10, 30, 1000, 10000};
  // K above this is only probed for the eta norm; retraining there is too slow.
  int train_k_max = 30;
};

/// Everything a pipeline run depends on. Serialized as INI next to outputs.
struct RunConfig {
  std::string maze = "maze-small";  // path, or the name of a bundled fixture
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string variant = "gam";

  maze::RenderConfig render;

  int explore_steps = 2000;
  maze::ExplorePolicy explore_policy = maze::ExplorePolicy::kRandom;
  bool blind = false;

  memory::SimilarityConfig sim_model;
  memory::TrainSimConfig sim{60, 64, 1e-3, 20000, 0.1, 1, {}};

  memory::BuildGraphConfig graph;
  int quality_max_geodesic = 8;
  double quality_cross_factor = 3.0;
  double quality_cross_slack = 4.0;

  double eta_scale = 1.0;
  agent::AgentConfig agent;

  int eval_max_steps = 500;
  int eval_score_steps = 2000;
  int eval_repeats = 1;
  bool eval_argmax = false;

  DiagConfig diag;
  SweepConfig sweep;

  /// Maze file to load: the path itself if it exists, otherwise the bundled
  /// fixture of that name.
  std::string maze_path() const {
    namespace fs = std::filesystem;
    if (fs::is_regular_file(maze)) return maze;
    const fs::path bundled = fs::path(GAM_DATA_DIR) / "mazes" / (maze + ".txt");
    if (fs::is_regular_file(bundled)) return bundled.string();
    throw ConfigError("maze not found: " + maze);
  }

  void validate() const {
    maze_path();
    if (out.empty()) throw ConfigError("run.out must not be empty");
    agent::parse_variant(variant);
    if (render.rays < 1 || !(render.max_depth > 0.0) || render.noise_sigma < 0.0)
      throw ConfigError("render: rays >= 1, max_depth > 0, noise_sigma >= 0");
    if (explore_steps < 21) throw ConfigError("explore.steps must be >= 21");
    if (sim_model.embed_dim < 1 || sim_model.encoder_hidden < 1 || sim_model.head_hidden < 1)
      throw ConfigError("sim: layer sizes must be >= 1");
    if (sim.epochs < 0 || sim.batch < 1 || !(sim.lr > 0.0) || sim.n_pairs < 2)
      throw ConfigError("sim: epochs >= 0, batch >= 1, lr > 0, n_pairs >= 2");
    if (!(sim.holdout_fraction >= 0.0 && sim.holdout_fraction < 1.0))
      throw ConfigError("sim.holdout_fraction must lie in [0, 1)");
    if (sim.horizon.t_min < 1 || sim.horizon.t_max < sim.horizon.t_min)
      throw ConfigError("sim: need 1 <= t_min <= t_max");
    if (sim.horizon.sub_min_fraction < 0.0 || sim.horizon.sub_min_fraction > 1.0)
      throw ConfigError("sim.sub_min_fraction must lie in [0, 1]");
    if (graph.stride < 1 || graph.l_ratio < 0.0) throw ConfigError("graph: stride >= 1, l_ratio >= 0");
    if (quality_max_geodesic < 0 || quality_cross_factor < 0.0 || quality_cross_slack < 0.0)
      throw ConfigError("graph quality thresholds must be >= 0");
    if (agent.gam.heads < 1 || agent.gam.k < 0 || agent.gam.l_loc < 1)
      throw ConfigError("gam: heads >= 1, k >= 0, l_loc >= 1");
    if (!(eta_scale > 0.0)) throw ConfigError("gam.eta_scale must be > 0");
    agent.validate();
    if (eval_max_steps < 1 || eval_score_steps < 0 || eval_repeats < 1)
      throw ConfigError("eval: max_steps >= 1, score_steps >= 0, repeats >= 1");
    if (diag.k_max < 0 || diag.every < 1 || !(diag.tol > 0.0)) throw ConfigError("diag: k_max >= 0, every >= 1, tol > 0");
    if (sweep.k_values.empty()) throw ConfigError("sweep.k_values must not be empty");
    for (int k : sweep.k_values)
      if (k < 0) throw ConfigError("sweep.k_values must be >= 0");
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> parse_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      while (used < item.size() && item[used] == ' ') ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": not a list of integers: '" + s + "'");
    }
  }
  return out;
}

/// Binds every INI key to a field once, so reading, writing and the
/// unknown-key check cannot drift apart.
class Binder {
 public:
  virtual ~Binder() = default;
  virtual void str(const char* key, std::string& v) = 0;
  virtual void real(const char* key, double& v) = 0;
  virtual void integer(const char* key, int& v) = 0;
  virtual void integer64(const char* key, std::int64_t& v) = 0;
  virtual void seed(const char* key, std::uint64_t& v) = 0;
  virtual void flag(const char* key, bool& v) = 0;
  virtual void ints(const char* key, std::vector<int>& v) = 0;
};

inline void bind_all(Binder& b, RunConfig& c) {
  b.str("run.maze", c.maze);
  b.seed("run.seed", c.seed);
  b.str("run.out", c.out);
  b.str("run.variant", c.variant);

  b.integer("render.rays", c.render.rays);
  b.real("render.max_depth", c.render.max_depth);
  b.real("render.noise_sigma", c.render.noise_sigma);

  b.integer("explore.steps", c.explore_steps);
  std::string policy = maze::to_string(c.explore_policy);
  b.str("explore.policy", policy);
  c.explore_policy = maze::parse_explore_policy(policy);
  b.flag("explore.blind", c.blind);

  b.integer("sim.embed_dim", c.sim_model.embed_dim);
  b.integer("sim.encoder_hidden", c.sim_model.encoder_hidden);
  b.integer("sim.head_hidden", c.sim_model.head_hidden);
  b.integer("sim.epochs", c.sim.epochs);
  b.integer("sim.batch", c.sim.batch);
  b.real("sim.lr", c.sim.lr);
  b.integer("sim.n_pairs", c.sim.n_pairs);
  b.real("sim.holdout_fraction", c.sim.holdout_fraction);
  b.integer("sim.t_min", c.sim.horizon.t_min);
  b.integer("sim.t_max", c.sim.horizon.t_max);
  b.real("sim.sub_min_fraction", c.sim.horizon.sub_min_fraction);

  b.integer("graph.l_global", c.graph.l_global);
  b.real("graph.l_ratio", c.graph.l_ratio);
  b.integer("graph.stride", c.graph.stride);
  b.integer("graph.max_geodesic", c.quality_max_geodesic);
  b.real("graph.cross_factor", c.quality_cross_factor);
  b.real("graph.cross_slack", c.quality_cross_slack);

  b.integer("gam.heads", c.agent.gam.heads);
  b.integer("gam.k", c.agent.gam.k);
  b.integer("gam.l_loc", c.agent.gam.l_loc);
  b.flag("gam.dynamic_w", c.agent.gam.dynamic_w);
  b.real("gam.eta_scale", c.eta_scale);

  b.real("agent.gamma", c.agent.gamma);
  b.real("agent.beta", c.agent.beta);
  b.real("agent.eps_start", c.agent.eps_start);
  b.real("agent.eps_end", c.agent.eps_end);
  b.real("agent.eps_anneal_fraction", c.agent.eps_anneal_fraction);
  b.integer("agent.t_h", c.agent.t_h);
  b.real("agent.lr", c.agent.lr);
  b.real("agent.grad_clip", c.agent.grad_clip);
  b.integer64("agent.total_steps", c.agent.total_steps);
  b.integer("agent.n_workers", c.agent.n_workers);
  b.integer("agent.hidden", c.agent.hidden);
  b.integer("agent.episode_length", c.agent.episode_length);
  b.integer("agent.success_window", c.agent.success_window);
  b.integer("agent.rolling_window", c.agent.rolling_window);

  b.integer("eval.max_steps", c.eval_max_steps);
  b.integer("eval.score_steps", c.eval_score_steps);
  b.integer("eval.repeats", c.eval_repeats);
  b.flag("eval.argmax", c.eval_argmax);

  b.integer("diag.k_max", c.diag.k_max);
  b.integer("diag.every", c.diag.every);
  b.real("diag.tol", c.diag.tol);

  b.ints("sweep.k_values", c.sweep.k_values);
  b.integer("sweep.train_k_max", c.sweep.train_k_max);
}

class Writer : public Binder {
 public:
  explicit Writer(boost::property_tree::ptree& pt) : pt_(pt) {}
  void str(const char* k, std::string& v) override { pt_.put(k, v); }
  void real(const char* k, double& v) override { pt_.put(k, fmt_double(v)); }
  void integer(const char* k, int& v) override { pt_.put(k, std::to_string(v)); }
  void integer64(const char* k, std::int64_t& v) override { pt_.put(k, std::to_string(v)); }
  void seed(const char* k, std::uint64_t& v) override { pt_.put(k, std::to_string(v)); }
  void flag(const char* k, bool& v) override { pt_.put(k, v ? "true" : "false"); }
  void ints(const char* k, std::vector<int>& v) override { pt_.put(k, join_ints(v)); }

 private:
  boost::property_tree::ptree& pt_;
};

class Reader : public Binder {
 public:
  explicit Reader(const boost::property_tree::ptree& pt) : pt_(pt) {}
  void str(const char* k, std::string& v) override {
    if (auto s = get(k)) v = *s;
  }
  void real(const char* k, double& v) override {
    if (auto s = get(k)) v = parse<double>(k, *s, [](const std::string& x, std::size_t* n) { return std::stod(x, n); });
  }
  void integer(const char* k, int& v) override {
    if (auto s = get(k)) v = parse<int>(k, *s, [](const std::string& x, std::size_t* n) { return std::stoi(x, n); });
  }
  void integer64(const char* k, std::int64_t& v) override {
    if (auto s = get(k)) v = parse<std::int64_t>(k, *s, [](const std::string& x, std::size_t* n) { return std::stoll(x, n); });
  }
  void seed(const char* k, std::uint64_t& v) override {
    if (auto s = get(k)) {
      if (!s->empty() && s->front() == '-') throw ConfigError(std::string(k) + ": must be >= 0");
      v = parse<std::uint64_t>(k, *s, [](const std::string& x, std::size_t* n) { return std::stoull(x, n); });
    }
  }
  void flag(const char* k, bool& v) override {
    if (auto s = get(k)) {
      if (*s == "true" || *s == "1") v = true;
      else if (*s == "false" || *s == "0") v = false;
      else throw ConfigError(std::string(k) + ": expected true or false, got '" + *s + "'");
    }
  }
  void ints(const char* k, std::vector<int>& v) override {
    if (auto s = get(k)) v = parse_ints(k, *s);
  }

  std::map<std::string, bool>& seen() { return seen_; }

 private:
  std::optional<std::string> get(const char* k) {
    seen_[k] = true;
    auto v = pt_.get_optional<std::string>(k);
    if (!v) return std::nullopt;
    return *v;
  }

  template <class T, class F>
  static T parse(const char* k, const std::string& s, F f) {
    try {
      std::size_t used = 0;
      T v = f(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(k) + ": cannot parse '" + s + "'");
    }
  }

  const boost::property_tree::ptree& pt_;
  std::map<std::string, bool> seen_;
};

}  // namespace detail

/// INI text with every key, doubles at %.17g so reading it back is exact.
inline std::string to_ini(const RunConfig& cfg) {
  boost::property_tree::ptree pt;
  RunConfig copy = cfg;
  detail::Writer w(pt);
  detail::bind_all(w, copy);
  std::ostringstream os;
  boost::property_tree::write_ini(os, pt);
  return os.str();
}

/// Starts from the defaults and applies the keys present. Unknown sections
/// or keys are errors, so typos do not pass silently. Not validated.
inline RunConfig parse_ini(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  detail::Reader r(pt);
  detail::bind_all(r, cfg);
  for (const auto& [section, keys] : pt) {
    if (keys.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : keys)
      if (!r.seen().count(section + "." + key)) throw ConfigError("config: unknown key '" + section + "." + key + "'");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_ini(ss.str());
}

}  // namespace gam::harness
