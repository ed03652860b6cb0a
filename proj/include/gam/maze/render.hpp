#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "gam/maze/maze.hpp"

namespace gam::maze {

/// Synthetic panoramic "camera". Layout of the feature vector:
///   [depth x F | texture one-hot x F*T | sin(bearing) x F | cos(bearing) x F]
/// Ray r points at heading + r * 360/F degrees (clockwise); bearings are
/// absolute, so the vector also encodes the heading.
struct RenderConfig {
  int rays = 12;
  double max_depth = 12.0;  // cells
  double noise_sigma = 0.0;

  int feature_size() const { return 3 * rays + rays * kTextureClasses; }
};

using Observation = Eigen::VectorXd;

struct RayHit {
  double distance = 0.0;  // cell-centre to hit face, plus half a cell
  int texture = 0;
};

/// Amanatides-Woo traversal from the centre of `from` along `bearing`
/// (radians, clockwise from north). An adjacent wall straight ahead reads 1.
inline RayHit cast_ray(const MazeSpec& m, Cell from, double bearing) {
  const double dx = std::sin(bearing);
  const double dy = -std::cos(bearing);
  int cx = from.x;
  int cy = from.y;
  const double ox = cx + 0.5;
  const double oy = cy + 0.5;
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double tdx = std::abs(dx) < 1e-12 ? kInf : 1.0 / std::abs(dx);
  const double tdy = std::abs(dy) < 1e-12 ? kInf : 1.0 / std::abs(dy);
  double tmx = std::abs(dx) < 1e-12 ? kInf : ((dx > 0 ? (cx + 1 - ox) : (ox - cx)) * tdx);
  double tmy = std::abs(dy) < 1e-12 ? kInf : ((dy > 0 ? (cy + 1 - oy) : (oy - cy)) * tdy);
  for (int guard = 0; guard < 4 * (m.width + m.height); ++guard) {
    double t = 0.0;
    if (tmx < tmy) {
      t = tmx;
      cx += step_x;
      tmx += tdx;
    } else {
      t = tmy;
      cy += step_y;
      tmy += tdy;
    }
    const Cell c{cx, cy};
    if (!m.in_bounds(c)) return {t + 0.5, 0};
    if (!m.is_free(c)) return {t + 0.5, m.texture_at(c)};
  }
  return {static_cast<double>(m.width + m.height), 0};
}

/// Pure function of (maze, pose, noise draw). Gaussian noise touches depth
/// channels only, which are re-clipped to [0, 1] afterwards.
template <class Urbg>
Observation render_observation(const MazeSpec& m, const AgentPose& pose, const RenderConfig& cfg, Urbg& rng) {
  const int f = cfg.rays;
  const int t = kTextureClasses;
  Observation obs = Observation::Zero(cfg.feature_size());
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  const double heading_rad = static_cast<int>(pose.heading) * std::numbers::pi / 2.0;
  for (int r = 0; r < f; ++r) {
    const double bearing = heading_rad + 2.0 * std::numbers::pi * r / f;
    const RayHit hit = cast_ray(m, pose.cell, bearing);
    double depth = std::clamp(hit.distance / cfg.max_depth, 0.0, 1.0);
    if (cfg.noise_sigma > 0) depth = std::clamp(depth + noise(rng), 0.0, 1.0);
    obs[r] = depth;
    obs[f + r * t + hit.texture] = 1.0;
    obs[f + f * t + r] = std::sin(bearing);
    obs[2 * f + f * t + r] = std::cos(bearing);
  }
  return obs;
}

/// Noise-free rendering.
inline Observation render_clean(const MazeSpec& m, const AgentPose& pose, RenderConfig cfg) {
  cfg.noise_sigma = 0.0;
  std::mt19937_64 unused(0);
  return render_observation(m, pose, cfg, unused);
}

}  // namespace gam::maze
