#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gam/error.hpp"

namespace gam::maze {

/// Number of wall texture classes.
inline constexpr int kTextureClasses = 8;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Heading : std::uint8_t { kN = 0, kE = 1, kS = 2, kW = 3 };

inline Heading rotate_cw(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }
inline Heading rotate_ccw(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading opposite(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 2) % 4); }

// y grows southwards (row index in the ASCII grid).
inline Cell heading_delta(Heading h) {
  static constexpr std::array<Cell, 4> d{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
  return d[static_cast<std::size_t>(h)];
}

struct AgentPose {
  Cell cell;
  Heading heading = Heading::kN;
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

enum class Action : int {
  kMoveForward = 0,
  kMoveBackward = 1,
  kMoveLeft = 2,
  kMoveRight = 3,
  kTurnLeft = 4,
  kTurnRight = 5,
  kNotMove = 6,
};
inline constexpr int kNumActions = 7;

inline Action action_from_index(int a) {
  if (a < 0 || a >= kNumActions) throw PreconditionError("invalid action index " + std::to_string(a));
  return static_cast<Action>(a);
}

/// Immutable maze description. Wall cells carry a texture id in [0, 8).
struct MazeSpec {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> wall;     // row-major, 1 = wall
  std::vector<std::uint8_t> texture;  // row-major, valid where wall
  std::vector<AgentPose> spawn_poses;
  Cell goal_cell;
  // Optional generalisation markers: cells never used as training spawns
  // ('n') and an alternative goal ('g').
  std::vector<Cell> novel_starts;
  std::vector<Cell> alt_goals;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.x); }
  bool is_free(Cell c) const { return in_bounds(c) && wall[index(c)] == 0; }
  int texture_at(Cell c) const { return texture[index(c)]; }

  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (is_free({x, y})) out.push_back({x, y});
    return out;
  }
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// BFS distances (in cells, 4-connected) from `src` to every cell; walls and
/// unreachable cells get kUnreachable.
inline std::vector<int> bfs_distances(const MazeSpec& m, Cell src) {
  std::vector<int> dist(static_cast<std::size_t>(m.width * m.height), kUnreachable);
  if (!m.is_free(src)) return dist;
  std::deque<Cell> q{src};
  dist[m.index(src)] = 0;
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop_front();
    for (int h = 0; h < 4; ++h) {
      const Cell d = heading_delta(static_cast<Heading>(h));
      const Cell n{c.x + d.x, c.y + d.y};
      if (m.is_free(n) && dist[m.index(n)] == kUnreachable) {
        dist[m.index(n)] = dist[m.index(c)] + 1;
        q.push_back(n);
      }
    }
  }
  return dist;
}

/// Shortest-path length in cells; kUnreachable when no path exists.
inline int geodesic_distance(const MazeSpec& m, Cell a, Cell b) {
  if (!m.is_free(a) || !m.is_free(b)) throw PreconditionError("geodesic_distance: cell is not free");
  return bfs_distances(m, a)[m.index(b)];
}

/// All-pairs geodesic table indexed by MazeSpec::index, built lazily by row.
class GeodesicTable {
 public:
  explicit GeodesicTable(const MazeSpec& m) : maze_(&m), rows_(static_cast<std::size_t>(m.width * m.height)) {}
  int operator()(Cell a, Cell b) {
    auto& row = rows_[maze_->index(a)];
    if (row.empty()) row = bfs_distances(*maze_, a);
    return row[maze_->index(b)];
  }

 private:
  const MazeSpec* maze_;
  std::vector<std::vector<int>> rows_;
};

/// Parses the ASCII layout: '#' or a digit 0-7 is a wall (digit = texture id,
/// '#' = texture 0), '.' free, 'S' spawn, 'G' goal, 'n' novel start,
/// 'g' alternative goal. Every marker cell is free. Spawns face north.
inline MazeSpec load_maze(const std::string& text) {
  std::vector<std::string> rows;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      rows.push_back(line);
    }
  }
  if (rows.empty()) throw ConfigError("maze: empty layout");
  MazeSpec m;
  m.height = static_cast<int>(rows.size());
  m.width = static_cast<int>(rows.front().size());
  for (const auto& r : rows)
    if (static_cast<int>(r.size()) != m.width) throw ConfigError("maze: non-rectangular layout");
  m.wall.assign(static_cast<std::size_t>(m.width * m.height), 0);
  m.texture.assign(m.wall.size(), 0);

  bool have_goal = false;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const char ch = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      const Cell c{x, y};
      const auto i = m.index(c);
      if (ch == '#') {
        m.wall[i] = 1;
      } else if (ch >= '0' && ch <= '9') {
        if (ch - '0' >= kTextureClasses)
          throw ConfigError("maze: texture id must be < " + std::to_string(kTextureClasses));
        m.wall[i] = 1;
        m.texture[i] = static_cast<std::uint8_t>(ch - '0');
      } else if (ch == '.') {
      } else if (ch == 'S') {
        m.spawn_poses.push_back({c, Heading::kN});
      } else if (ch == 'G') {
        if (have_goal) throw ConfigError("maze: more than one goal");
        m.goal_cell = c;
        have_goal = true;
      } else if (ch == 'n') {
        m.novel_starts.push_back(c);
      } else if (ch == 'g') {
        m.alt_goals.push_back(c);
      } else {
        throw ConfigError(std::string("maze: unknown cell character '") + ch + "'");
      }
    }
  }
  if (!have_goal) throw ConfigError("maze: missing goal");
  if (m.spawn_poses.empty()) throw ConfigError("maze: no spawn cells");

  const auto dist = bfs_distances(m, m.goal_cell);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.is_free({x, y}) && dist[m.index({x, y})] == kUnreachable)
        throw ConfigError("maze: disconnected free space at (" + std::to_string(x) + "," + std::to_string(y) + ")");
  return m;
}

inline MazeSpec load_maze_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open maze file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return load_maze(ss.str());
}

/// Pose after applying `action`; blocked translations leave the pose as is.
inline AgentPose transition(const MazeSpec& m, const AgentPose& pose, Action action) {
  AgentPose next = pose;
  Heading dir = pose.heading;
  switch (action) {
    case Action::kTurnLeft: next.heading = rotate_ccw(pose.heading); return next;
    case Action::kTurnRight: next.heading = rotate_cw(pose.heading); return next;
    case Action::kNotMove: return next;
    case Action::kMoveForward: break;
    case Action::kMoveBackward: dir = opposite(pose.heading); break;
    case Action::kMoveLeft: dir = rotate_ccw(pose.heading); break;
    case Action::kMoveRight: dir = rotate_cw(pose.heading); break;
  }
  const Cell d = heading_delta(dir);
  const Cell target{pose.cell.x + d.x, pose.cell.y + d.y};
  if (m.is_free(target)) next.cell = target;
  return next;
}

}  // namespace gam::maze
