#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gam/error.hpp"
#include "gam/maze/env.hpp"

namespace gam::maze {

struct ExplorationRecord {
  int traj_id = 0;
  int t = 0;
  Observation features;
  std::optional<AgentPose> pose;  // oracle only
};

/// Ordered exploration samples; a new trajectory starts after every respawn.
struct ExplorationDB {
  std::vector<ExplorationRecord> records;

  std::size_t size() const { return records.size(); }
  int feature_size() const { return records.empty() ? 0 : static_cast<int>(records.front().features.size()); }
  bool has_poses() const { return !records.empty() && records.front().pose.has_value(); }

  int trajectory_count() const { return records.empty() ? 0 : records.back().traj_id + 1; }

  /// [begin, end) record ranges per trajectory id.
  std::vector<std::pair<std::size_t, std::size_t>> trajectory_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t b = 0;
    for (std::size_t i = 1; i <= records.size(); ++i) {
      if (i == records.size() || records[i].traj_id != records[b].traj_id) {
        out.emplace_back(b, i);
        b = i;
      }
    }
    return out;
  }
};

enum class ExplorePolicy { kRandom, kWallFollow };

inline ExplorePolicy parse_explore_policy(const std::string& s) {
  if (s == "random") return ExplorePolicy::kRandom;
  if (s == "wall-follow" || s == "wall_follow") return ExplorePolicy::kWallFollow;
  throw ConfigError("unknown explore policy '" + s + "'");
}

inline const char* to_string(ExplorePolicy p) { return p == ExplorePolicy::kRandom ? "random" : "wall-follow"; }

/// Collects `steps` samples. kRandom draws uniformly from the 7 actions;
/// kWallFollow keeps a wall on its left and takes a random action with
/// probability `wall_follow_noise`.
inline ExplorationDB explore_collect(std::shared_ptr<const MazeSpec> maze, ExplorePolicy policy, int steps,
                                     std::uint64_t seed, const RenderConfig& render, int min_steps = 21,
                                     double wall_follow_noise = 0.25) {
  if (steps < min_steps)
    throw PreconditionError("explore_collect: need at least " + std::to_string(min_steps) + " steps");
  std::mt19937_64 rng(seed);
  MazeEnv env(maze, render, rng(), steps);
  std::uniform_int_distribution<int> any_action(0, kNumActions - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  ExplorationDB db;
  db.records.reserve(static_cast<std::size_t>(steps));
  Observation obs = env.reset();
  int traj = 0;
  int t = 0;
  bool just_turned_left = false;
  for (int s = 0; s < steps; ++s) {
    db.records.push_back({traj, t, obs, env.pose()});
    int action = 0;
    if (policy == ExplorePolicy::kRandom || u01(rng) < wall_follow_noise) {
      action = any_action(rng);
      just_turned_left = false;
    } else {
      const AgentPose p = env.pose();
      const Cell l = heading_delta(rotate_ccw(p.heading));
      const Cell f = heading_delta(p.heading);
      if (just_turned_left && maze->is_free({p.cell.x + f.x, p.cell.y + f.y})) {
        action = static_cast<int>(Action::kMoveForward);
        just_turned_left = false;
      } else if (maze->is_free({p.cell.x + l.x, p.cell.y + l.y})) {
        action = static_cast<int>(Action::kTurnLeft);
        just_turned_left = true;
      } else if (maze->is_free({p.cell.x + f.x, p.cell.y + f.y})) {
        action = static_cast<int>(Action::kMoveForward);
      } else {
        action = static_cast<int>(Action::kTurnRight);
      }
    }
    StepResult r = env.step(action);
    obs = std::move(r.observation);
    if (r.reached_goal) {
      ++traj;
      t = 0;
    } else {
      ++t;
    }
  }
  return db;
}

// ---- JSON-lines persistence ------------------------------------------------

inline nlohmann::json record_to_json(const ExplorationRecord& r, bool blind) {
  nlohmann::json j;
  j["traj_id"] = r.traj_id;
  j["t"] = r.t;
  j["features"] = std::vector<double>(r.features.data(), r.features.data() + r.features.size());
  if (!blind && r.pose)
    j["pose"] = {{"x", r.pose->cell.x}, {"y", r.pose->cell.y}, {"h", static_cast<int>(r.pose->heading)}};
  return j;
}

/// One JSON object per line; `blind` drops the oracle pose fields.
inline void write_exploration_jsonl(std::ostream& os, const ExplorationDB& db, bool blind) {
  for (const auto& r : db.records) os << record_to_json(r, blind).dump() << '\n';
}

inline void save_exploration(const std::string& path, const ExplorationDB& db, bool blind) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw PreconditionError("cannot write " + path);
  write_exploration_jsonl(os, db, blind);
}

inline ExplorationDB read_exploration_jsonl(std::istream& is) {
  ExplorationDB db;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ExplorationRecord r;
      r.traj_id = j.at("traj_id").get<int>();
      r.t = j.at("t").get<int>();
      const auto f = j.at("features").get<std::vector<double>>();
      r.features = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
      if (j.contains("pose")) {
        const auto& p = j["pose"];
        r.pose = AgentPose{{p.at("x").get<int>(), p.at("y").get<int>()}, static_cast<Heading>(p.at("h").get<int>() & 3)};
      }
      db.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("exploration db line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return db;
}

inline ExplorationDB load_exploration(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PreconditionError("missing exploration db: " + path);
  return read_exploration_jsonl(is);
}

}  // namespace gam::maze
