#pragma once

#include <cstdint>
#include <memory>
#include <random>

#include "gam/maze/maze.hpp"
#include "gam/maze/render.hpp"

namespace gam::maze {

inline constexpr double kGoalReward = 10.0;
inline constexpr double kStepPenalty = -0.05;
inline constexpr int kDefaultEpisodeLength = 2000;

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool reached_goal = false;  // goal hit; the agent was re-spawned
  bool episode_done = false;  // step counter hit the episode length
  AgentPose pose;             // oracle only: never fed to learners
};

/// One environment instance. The maze is shared read-only; the RNG (respawn
/// choice and observation noise) belongs to this instance.
class MazeEnv {
 public:
  MazeEnv(std::shared_ptr<const MazeSpec> maze, RenderConfig render, std::uint64_t seed,
          int episode_length = kDefaultEpisodeLength)
      : maze_(std::move(maze)), render_(render), rng_(seed), episode_length_(episode_length) {}

  const MazeSpec& maze() const { return *maze_; }
  const AgentPose& pose() const { return pose_; }
  int steps_taken() const { return t_; }
  int episode_length() const { return episode_length_; }
  void set_goal(Cell g) {
    if (!maze_->is_free(g)) throw PreconditionError("goal cell is not free");
    goal_ = g;
    has_goal_override_ = true;
  }
  Cell goal() const { return has_goal_override_ ? goal_ : maze_->goal_cell; }

  /// Starts a new episode at a uniformly chosen spawn pose.
  Observation reset() {
    t_ = 0;
    pose_ = sample_spawn();
    return observe();
  }

  /// Starts a new episode at a given pose.
  Observation reset_to(const AgentPose& p) {
    if (!maze_->is_free(p.cell)) throw PreconditionError("start pose is not on a free cell");
    t_ = 0;
    pose_ = p;
    return observe();
  }

  StepResult step(int action_index) {
    const Action a = action_from_index(action_index);
    StepResult r;
    pose_ = transition(*maze_, pose_, a);
    ++t_;
    if (pose_.cell == goal()) {
      r.reward = kGoalReward;
      r.reached_goal = true;
      pose_ = sample_spawn();
    } else {
      r.reward = kStepPenalty;
    }
    r.episode_done = t_ >= episode_length_;
    r.observation = observe();
    r.pose = pose_;
    return r;
  }

  Observation observe() { return render_observation(*maze_, pose_, render_, rng_); }

 private:
  AgentPose sample_spawn() {
    std::uniform_int_distribution<std::size_t> pick(0, maze_->spawn_poses.size() - 1);
    return maze_->spawn_poses[pick(rng_)];
  }

  std::shared_ptr<const MazeSpec> maze_;
  RenderConfig render_;
  std::mt19937_64 rng_;
  int episode_length_;
  int t_ = 0;
  AgentPose pose_;
  Cell goal_;
  bool has_goal_override_ = false;
};

}  // namespace gam::maze
