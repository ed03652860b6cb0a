#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "gam/error.hpp"
#include "gam/linalg.hpp"
#include "gam/maze/explore.hpp"
#include "gam/memory/similarity.hpp"

namespace gam::memory {

enum class EdgeKind { kConsecutive, kClassifier };

struct GraphEdge {
  int i = 0;  // i < j
  int j = 0;
  EdgeKind kind = EdgeKind::kConsecutive;
};

struct GraphNode {
  int id = 0;
  int traj = 0;
  int t = 0;
};

/// Topological memory. Nodes are ordered by (traj, t); `features` holds one
/// embedding per row. neighbors[i] is sorted and always contains i.
struct TopoGraph {
  std::vector<GraphNode> nodes;
  RowMatrix features;
  std::vector<GraphEdge> edges;
  std::vector<std::vector<int>> neighbors;
  int l_global = 0;
  int stride = 1;

  int size() const { return static_cast<int>(nodes.size()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  int consecutive_edge_count() const {
    return static_cast<int>(std::count_if(edges.begin(), edges.end(), [](const GraphEdge& e) { return e.kind == EdgeKind::kConsecutive; }));
  }
  int classifier_edge_count() const { return static_cast<int>(edges.size()) - consecutive_edge_count(); }

  /// Rebuilds neighbor lists from the edge set.
  void rebuild_adjacency() {
    neighbors.assign(nodes.size(), {});
    for (int i = 0; i < size(); ++i) neighbors[static_cast<std::size_t>(i)].push_back(i);
    for (const auto& e : edges) {
      neighbors[static_cast<std::size_t>(e.i)].push_back(e.j);
      neighbors[static_cast<std::size_t>(e.j)].push_back(e.i);
    }
    for (auto& n : neighbors) {
      std::sort(n.begin(), n.end());
      n.erase(std::unique(n.begin(), n.end()), n.end());
    }
  }

  /// Connected-component label per node (labels dense, in order of first node).
  std::vector<int> components() const {
    std::vector<int> comp(nodes.size(), -1);
    int c = 0;
    for (int s = 0; s < size(); ++s) {
      if (comp[static_cast<std::size_t>(s)] >= 0) continue;
      std::vector<int> stack{s};
      comp[static_cast<std::size_t>(s)] = c;
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : neighbors[static_cast<std::size_t>(u)])
          if (comp[static_cast<std::size_t>(v)] < 0) {
            comp[static_cast<std::size_t>(v)] = c;
            stack.push_back(v);
          }
      }
      ++c;
    }
    return comp;
  }

  int component_count() const {
    const auto c = components();
    return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
  }
};

/// Builds a graph directly from nodes and an edge list (tests, file loading).
inline TopoGraph make_graph(std::vector<GraphNode> nodes, RowMatrix features, std::vector<GraphEdge> edges) {
  TopoGraph g;
  g.nodes = std::move(nodes);
  g.features = std::move(features);
  for (auto& e : edges) {
    if (e.i == e.j) throw PreconditionError("graph: self edges are implicit");
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.i < 0 || e.j >= static_cast<int>(g.nodes.size())) throw PreconditionError("graph: edge index out of range");
  }
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  edges.erase(std::unique(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) { return a.i == b.i && a.j == b.j; }),
              edges.end());
  g.edges = std::move(edges);
  g.rebuild_adjacency();
  return g;
}

struct BuildGraphConfig {
  int l_global = -1;  // < 0: round(l_ratio * N)
  double l_ratio = 0.65;
  int stride = 5;
};

/// Node i is record nodes_index[i]; consecutive nodes of one trajectory are
/// chained, then the l_global most probable remaining pairs are added (the
/// top-L rule stands in for a probability threshold). Uses observations
/// only, never poses or actions.
inline TopoGraph build_graph(const SimilarityModel& model, const maze::ExplorationDB& db, const BuildGraphConfig& cfg,
                             std::vector<std::size_t>* node_records = nullptr) {
  if (cfg.stride < 1) throw ConfigError("build_graph: stride must be >= 1");
  std::vector<std::size_t> recs;
  for (std::size_t r = 0; r < db.size(); ++r)
    if (db.records[r].t % cfg.stride == 0) recs.push_back(r);
  if (recs.empty()) throw PreconditionError("build_graph: no nodes");

  TopoGraph g;
  g.stride = cfg.stride;
  nn::Matrix obs(db.feature_size(), static_cast<Eigen::Index>(recs.size()));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = db.records[recs[i]];
    g.nodes.push_back({static_cast<int>(i), r.traj_id, r.t});
    obs.col(static_cast<Eigen::Index>(i)) = r.features;
  }
  g.features = model.embed(obs);
  const int n = g.size();

  std::vector<GraphEdge> edges;
  for (int i = 0; i + 1 < n; ++i)
    if (g.nodes[static_cast<std::size_t>(i)].traj == g.nodes[static_cast<std::size_t>(i + 1)].traj)
      edges.push_back({i, i + 1, EdgeKind::kConsecutive});

  const long long candidates = static_cast<long long>(n) * (n - 1) / 2 - static_cast<long long>(edges.size());
  const int l = cfg.l_global >= 0 ? cfg.l_global : static_cast<int>(std::lround(cfg.l_ratio * n));
  if (l > candidates)
    throw PreconditionError("build_graph: L_global=" + std::to_string(l) + " exceeds " + std::to_string(candidates) +
                            " candidate pairs");
  g.l_global = l;

  if (l > 0) {
    struct Cand {
      double p;
      int i;
      int j;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(candidates));
    for (int i = 0; i < n; ++i) {
      const nn::Vector p = model.prob_against(g.features.row(i).transpose(), g.features);
      const bool chained = i + 1 < n && g.nodes[static_cast<std::size_t>(i)].traj == g.nodes[static_cast<std::size_t>(i + 1)].traj;
      for (int j = i + 1; j < n; ++j) {
        if (j == i + 1 && chained) continue;
        cands.push_back({p[j], i, j});
      }
    }
    auto better = [](const Cand& a, const Cand& b) {
      if (a.p != b.p) return a.p > b.p;
      return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    };
    std::nth_element(cands.begin(), cands.begin() + (l - 1), cands.end(), better);
    for (int k = 0; k < l; ++k) edges.push_back({cands[static_cast<std::size_t>(k)].i, cands[static_cast<std::size_t>(k)].j, EdgeKind::kClassifier});
  }

  TopoGraph out = make_graph(std::move(g.nodes), std::move(g.features), std::move(edges));
  out.l_global = l;
  out.stride = cfg.stride;
  if (node_records) *node_records = std::move(recs);
  return out;
}

// ---- JSON persistence ------------------------------------------------------

inline nlohmann::json graph_to_json(const TopoGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : g.nodes) {
    const auto row = g.features.row(nd.id);
    nodes.push_back({{"id", nd.id},
                     {"feature", std::vector<double>(row.data(), row.data() + row.size())},
                     {"traj", nd.traj},
                     {"t", nd.t}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({e.i, e.j});
  return {{"nodes", nodes},
          {"edges", edges},
          {"meta", {{"L_global", g.l_global}, {"stride", g.stride}, {"consecutive_edges", g.consecutive_edge_count()}}}};
}

/// Edge kinds are recovered from node order: consecutive = adjacent nodes of
/// the same trajectory.
inline TopoGraph graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<GraphNode> nodes;
    const auto& jn = j.at("nodes");
    if (jn.empty()) throw ConfigError("graph file has no nodes");
    const auto dim = jn.front().at("feature").size();
    RowMatrix feats(static_cast<Eigen::Index>(jn.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < jn.size(); ++i) {
      const auto& n = jn[i];
      if (n.at("id").get<int>() != static_cast<int>(i)) throw ConfigError("graph nodes must be ordered by id");
      nodes.push_back({static_cast<int>(i), n.at("traj").get<int>(), n.at("t").get<int>()});
      const auto f = n.at("feature").get<std::vector<double>>();
      if (f.size() != dim) throw ConfigError("graph node features differ in length");
      for (std::size_t k = 0; k < dim; ++k) feats(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f[k];
    }
    std::vector<GraphEdge> edges;
    for (const auto& e : j.at("edges")) {
      int a = e.at(0).get<int>();
      int b = e.at(1).get<int>();
      if (a > b) std::swap(a, b);
      const bool consecutive = b == a + 1 && nodes.at(static_cast<std::size_t>(a)).traj == nodes.at(static_cast<std::size_t>(b)).traj;
      edges.push_back({a, b, consecutive ? EdgeKind::kConsecutive : EdgeKind::kClassifier});
    }
    TopoGraph g = make_graph(std::move(nodes), std::move(feats), std::move(edges));
    g.l_global = j.at("meta").at("L_global").get<int>();
    g.stride = j.at("meta").at("stride").get<int>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed graph file: ") + e.what());
  }
}

inline void save_graph(const std::string& path, const TopoGraph& g) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw PreconditionError("cannot write " + path);
  os << graph_to_json(g).dump() << '\n';
}

inline TopoGraph load_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PreconditionError("missing graph file: " + path);
  try {
    return graph_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed graph file: ") + e.what());
  }
}

// ---- oracle-based quality --------------------------------------------------

struct GraphQuality {
  int classifier_edges = 0;
  int within_geodesic = 0;   // classifier edges with geodesic <= max_geodesic
  int wall_crossing = 0;     // geodesic > factor * euclidean + slack
  double validity = 0.0;     // within_geodesic / classifier_edges
  int components = 0;
};

/// Uses ground-truth poses from the DB; evaluation only.
inline GraphQuality graph_quality(const TopoGraph& g, const maze::ExplorationDB& db, const maze::MazeSpec& maze,
                                  int max_geodesic = 8, double cross_factor = 3.0, double cross_slack = 4.0) {
  if (!db.has_poses()) throw PreconditionError("graph_quality needs an exploration db with oracle poses");
  std::vector<maze::Cell> cell(static_cast<std::size_t>(g.size()));
  {
    std::size_t r = 0;
    for (const auto& nd : g.nodes) {
      while (r < db.size() && (db.records[r].traj_id != nd.traj || db.records[r].t != nd.t)) ++r;
      if (r == db.size()) throw PreconditionError("graph node not found in exploration db");
      cell[static_cast<std::size_t>(nd.id)] = db.records[r].pose->cell;
    }
  }
  maze::GeodesicTable geo(maze);
  GraphQuality q;
  for (const auto& e : g.edges) {
    if (e.kind != EdgeKind::kClassifier) continue;
    ++q.classifier_edges;
    const auto a = cell[static_cast<std::size_t>(e.i)];
    const auto b = cell[static_cast<std::size_t>(e.j)];
    const int d = geo(a, b);
    const double eu = std::hypot(a.x - b.x, a.y - b.y);
    if (d <= max_geodesic) ++q.within_geodesic;
    if (d > cross_factor * eu + cross_slack) ++q.wall_crossing;
  }
  q.validity = q.classifier_edges ? static_cast<double>(q.within_geodesic) / q.classifier_edges : 1.0;
  q.components = g.component_count();
  return q;
}

}  // namespace gam::memory
