#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gam/agent/evaluate.hpp"
#include "gam/attention/diag.hpp"
#include "gam/harness/config.hpp"
#include "gam/harness/manifest.hpp"

namespace gam::harness {

namespace fs = std::filesystem;

/// Bookkeeping shared by every command: holds the directory lock, records
/// input and output hashes and writes the manifest plus the effective config.
class Stage {
 public:
  Stage(const RunConfig& cfg, std::string name, std::ostream* log)
      : cfg_(validated(cfg)), dir_(cfg.out), lock_(dir_), log_(log), t0_(std::chrono::steady_clock::now()) {
    m_.stage = std::move(name);
  }

  const fs::path& dir() const { return dir_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

  /// Chains to an upstream stage: its digest and all of its ancestors.
  void upstream(const std::string& stage) {
    const RunManifest up = load_manifest(dir_, stage);
    m_.parents[up.stage] = up.digest;
    for (const auto& [k, v] : up.parents) m_.parents[k] = v;
  }

  std::string input(const std::string& name) {
    const std::string p = path(name);
    if (!fs::exists(p)) throw PreconditionError("missing upstream artifact: " + p);
    m_.inputs.push_back({name, sha256_file(p)});
    return p;
  }

  void output(const std::string& name, const std::string& bytes) {
    write_file(path(name), bytes);
    m_.outputs.push_back({name, sha256_hex(bytes)});
  }

  void output_json(const std::string& name, const nlohmann::json& j) { output(name, j.dump(2) + "\n"); }

  /// For files written by library code.
  void output_file(const std::string& name) { m_.outputs.push_back({name, sha256_file(path(name))}); }

  std::ostream* log() const { return log_; }
  void note(const std::string& msg) const {
    if (log_) *log_ << m_.stage << ": " << msg << '\n';
  }

  RunManifest finish() {
    const std::string ini = to_ini(cfg_);
    m_.config_sha256 = sha256_hex(ini);
    output(m_.stage + ".config.ini", ini);
    m_.digest = m_.content_digest();
    m_.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    write_file(path(manifest_name(m_.stage)), m_.to_json().dump(2) + "\n");
    note("done in " + detail::fmt_double(m_.wall_clock_s) + " s, digest " + m_.digest.substr(0, 12));
    return m_;
  }

 private:
  static const RunConfig& validated(const RunConfig& c) {
    c.validate();
    return c;
  }

  RunConfig cfg_;
  fs::path dir_;
  DirLock lock_;
  std::ostream* log_;
  std::chrono::steady_clock::time_point t0_;
  RunManifest m_;
};

namespace detail {

inline std::shared_ptr<const maze::MazeSpec> load_maze(const RunConfig& cfg) {
  return std::make_shared<const maze::MazeSpec>(maze::load_maze_file(cfg.maze_path()));
}

inline std::string csv_double(double v) { return fmt_double(v); }

inline nlohmann::json pose_json(const maze::AgentPose& p) {
  return {{"x", p.cell.x}, {"y", p.cell.y}, {"h", static_cast<int>(p.heading)}};
}

inline std::shared_ptr<memory::SimilarityModel> load_sim(const std::string& path) {
  return std::make_shared<memory::SimilarityModel>(memory::SimilarityModel::import_from(nn::load_checkpoint(path)));
}

/// GAM settings stored with an agent checkpoint, so evaluation uses the
/// attention block the policy was trained with.
inline nn::NamedTensor gam_meta(const attention::GamConfig& g, double eta_scale) {
  nn::Matrix m(5, 1);
  m << g.heads, g.k, g.l_loc, g.dynamic_w ? 1.0 : 0.0, eta_scale;
  return {"agent/@gam", m};
}

inline std::pair<attention::GamConfig, double> read_gam_meta(const std::vector<nn::NamedTensor>& t) {
  for (const auto& x : t)
    if (x.name == "agent/@gam" && x.value.size() == 5) {
      attention::GamConfig g;
      g.heads = static_cast<int>(x.value(0, 0));
      g.k = static_cast<int>(x.value(1, 0));
      g.l_loc = static_cast<int>(x.value(2, 0));
      g.dynamic_w = x.value(3, 0) != 0.0;
      return {g, x.value(4, 0)};
    }
  throw ConfigError("agent checkpoint lacks its attention settings");
}

inline std::string stage_suffix(bool novel_starts, const std::optional<maze::Cell>& goal) {
  std::string s;
  if (novel_starts) s += "-novel-starts";
  if (goal) s += "-goal-" + std::to_string(goal->x) + "-" + std::to_string(goal->y);
  return s;
}

/// Mean over graph nodes of ||eta(node, goal)|| (unscaled) and of the K = 0
/// value sqrt(H) * ||x_node - x_goal||.
inline std::pair<double, double> graph_eta_norms(const attention::GuidedAttention& ga, int goal) {
  const int n = ga.size();
  double eta = 0.0, raw = 0.0;
  const double root_h = std::sqrt(static_cast<double>(ga.config().heads));
  for (int i = 0; i < n; ++i) {
    eta += ga.eta(i, goal).eta.norm();
    raw += root_h * (ga.features().row(i) - ga.features().row(goal)).norm();
  }
  return {eta / n, raw / n};
}

}  // namespace detail

// ---- explore ---------------------------------------------------------------

struct ExploreSummary {
  int records = 0;
  int trajectories = 0;
  double coverage = 0.0;  // visited free cells / free cells
};

inline ExploreSummary cmd_explore(const RunConfig& cfg, std::ostream* log = nullptr) {
  Stage st(cfg, "explore", log);
  const auto maze = detail::load_maze(cfg);
  const auto db = maze::explore_collect(maze, cfg.explore_policy, cfg.explore_steps, cfg.seed, cfg.render);
  std::ostringstream os;
  maze::write_exploration_jsonl(os, db, cfg.blind);
  st.output("explore.jsonl", os.str());

  std::set<std::pair<int, int>> seen;
  for (const auto& r : db.records) seen.insert({r.pose->cell.x, r.pose->cell.y});
  ExploreSummary s;
  s.records = static_cast<int>(db.size());
  s.trajectories = static_cast<int>(db.trajectory_ranges().size());
  const auto free = maze->free_cells().size();
  s.coverage = static_cast<double>(seen.size()) / static_cast<double>(free);
  st.output_json("explore_report.json", {{"records", s.records},
                                         {"trajectories", s.trajectories},
                                         {"policy", maze::to_string(cfg.explore_policy)},
                                         {"blind", cfg.blind},
                                         {"free_cells", free},
                                         {"visited_cells", seen.size()},
                                         {"coverage", s.coverage}});
  st.note(std::to_string(s.records) + " records, coverage " + detail::fmt_double(s.coverage));
  st.finish();
  return s;
}

// ---- train-sim -------------------------------------------------------------

struct TrainSimSummary {
  std::vector<double> epoch_loss;
  std::vector<double> heldout_accuracy;
  int first_epoch = 0;  // > 0 when resumed
};

/// With `resume` and an existing sim.ckpt, continues from the epochs it
/// already holds; the result matches an uninterrupted run bit for bit.
inline TrainSimSummary cmd_train_sim(const RunConfig& cfg, bool resume = false, std::ostream* log = nullptr) {
  Stage st(cfg, "train-sim", log);
  st.upstream("explore");
  const auto db = maze::load_exploration(st.input("explore.jsonl"));
  memory::SimilarityConfig mc = cfg.sim_model;
  mc.obs_dim = db.feature_size();

  TrainSimSummary s;
  memory::SimilarityModel model(mc);
  if (resume && st.exists("sim.ckpt")) {
    const auto t = nn::load_checkpoint(st.path("sim.ckpt"));
    model = memory::SimilarityModel::import_from(t);
    if (model.config().obs_dim != mc.obs_dim || model.config().embed_dim != mc.embed_dim ||
        model.config().encoder_hidden != mc.encoder_hidden || model.config().head_hidden != mc.head_hidden)
      throw ConfigError("train-sim --resume: checkpoint shape differs from the config");
    for (const auto& x : t)
      if (x.name == "sim/@history")
        for (Eigen::Index e = 0; e < x.value.cols(); ++e) {
          s.epoch_loss.push_back(x.value(0, e));
          s.heldout_accuracy.push_back(x.value(1, e));
        }
    s.first_epoch = static_cast<int>(s.epoch_loss.size());
    st.note("resuming after epoch " + std::to_string(s.first_epoch));
  } else {
    model.init(cfg.seed);
  }
  memory::TrainSimConfig tc = cfg.sim;
  tc.seed = cfg.seed;
  memory::TrainSimReport rep;
  if (s.first_epoch < tc.epochs) {
    rep = memory::train_similarity(model, db, tc, s.first_epoch);
  } else {
    auto [train, held] = memory::split_pairs(db, tc);
    rep.train_pairs = static_cast<int>(train.size());
    rep.heldout_pairs = static_cast<int>(held.size());
  }
  s.epoch_loss.insert(s.epoch_loss.end(), rep.epoch_loss.begin(), rep.epoch_loss.end());
  s.heldout_accuracy.insert(s.heldout_accuracy.end(), rep.heldout_accuracy.begin(), rep.heldout_accuracy.end());

  std::vector<nn::NamedTensor> ck;
  model.export_to(ck, true);
  nn::Matrix hist(2, static_cast<Eigen::Index>(s.epoch_loss.size()));
  for (std::size_t e = 0; e < s.epoch_loss.size(); ++e) {
    hist(0, static_cast<Eigen::Index>(e)) = s.epoch_loss[e];
    hist(1, static_cast<Eigen::Index>(e)) = s.heldout_accuracy[e];
  }
  ck.push_back({"sim/@history", hist});
  std::ostringstream bin;
  nn::write_checkpoint(bin, ck);
  st.output("sim.ckpt", bin.str());

  std::ostringstream csv;
  csv << "epoch,loss,heldout_accuracy\n";
  for (std::size_t e = 0; e < s.epoch_loss.size(); ++e)
    csv << e << ',' << detail::csv_double(s.epoch_loss[e]) << ',' << detail::csv_double(s.heldout_accuracy[e]) << '\n';
  st.output("sim_metrics.csv", csv.str());
  const double acc = s.heldout_accuracy.empty() ? 0.0 : s.heldout_accuracy.back();
  st.output_json("sim_report.json", {{"epochs", s.epoch_loss.size()},
                                     {"train_pairs", rep.train_pairs},
                                     {"heldout_pairs", rep.heldout_pairs},
                                     {"heldout_accuracy", acc}});
  st.note("held-out accuracy " + detail::fmt_double(acc));
  st.finish();
  return s;
}

// ---- build-graph -----------------------------------------------------------

struct BuildGraphSummary {
  int nodes = 0;
  int edges = 0;
  int consecutive_edges = 0;
  int l_global = 0;
  int components = 0;
  std::optional<memory::GraphQuality> quality;  // needs oracle poses
  std::vector<std::string> warnings;
};

inline BuildGraphSummary cmd_build_graph(const RunConfig& cfg, std::ostream* log = nullptr) {
  Stage st(cfg, "build-graph", log);
  st.upstream("train-sim");
  const auto maze = detail::load_maze(cfg);
  const auto db = maze::load_exploration(st.input("explore.jsonl"));
  const auto model = detail::load_sim(st.input("sim.ckpt"));
  std::vector<std::size_t> recs;
  const auto g = memory::build_graph(*model, db, cfg.graph, &recs);
  st.output("graph.json", memory::graph_to_json(g).dump() + "\n");

  BuildGraphSummary s;
  s.nodes = g.size();
  s.edges = static_cast<int>(g.edges.size());
  s.consecutive_edges = g.consecutive_edge_count();
  s.l_global = g.l_global;
  s.components = g.component_count();
  if (s.components > 1)
    s.warnings.push_back("graph has " + std::to_string(s.components) +
                         " components; eta carries no path information between them");

  nlohmann::json report = {{"nodes", s.nodes},           {"edges", s.edges},
                           {"consecutive_edges", s.consecutive_edges},
                           {"classifier_edges", s.edges - s.consecutive_edges},
                           {"l_global", s.l_global},     {"stride", g.stride},
                           {"components", s.components}};
  if (db.has_poses()) {
    // Overlay for plotting: node poses from the oracle and the edge list.
    maze::GeodesicTable geo(*maze);
    std::ostringstream nodes, edges;
    nodes << "id,traj,t,x,y,heading\n";
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& r = db.records[recs[i]];
      nodes << i << ',' << r.traj_id << ',' << r.t << ',' << r.pose->cell.x << ',' << r.pose->cell.y << ','
            << static_cast<int>(r.pose->heading) << '\n';
    }
    edges << "i,j,kind,xi,yi,xj,yj,geodesic\n";
    for (const auto& e : g.edges) {
      const auto a = db.records[recs[static_cast<std::size_t>(e.i)]].pose->cell;
      const auto b = db.records[recs[static_cast<std::size_t>(e.j)]].pose->cell;
      edges << e.i << ',' << e.j << ',' << (e.kind == memory::EdgeKind::kConsecutive ? "consecutive" : "classifier")
            << ',' << a.x << ',' << a.y << ',' << b.x << ',' << b.y << ',' << geo(a, b) << '\n';
    }
    st.output("graph_nodes.csv", nodes.str());
    st.output("graph_edges.csv", edges.str());
    s.quality = memory::graph_quality(g, db, *maze, cfg.quality_max_geodesic, cfg.quality_cross_factor,
                                      cfg.quality_cross_slack);
    report["oracle"] = {{"classifier_edges", s.quality->classifier_edges},
                        {"within_geodesic", s.quality->within_geodesic},
                        {"validity", s.quality->validity},
                        {"wall_crossing", s.quality->wall_crossing},
                        {"max_geodesic", cfg.quality_max_geodesic},
                        {"cross_factor", cfg.quality_cross_factor},
                        {"cross_slack", cfg.quality_cross_slack}};
  } else {
    report["oracle"] = nullptr;
    s.warnings.push_back("exploration db is blind; no pose overlay or geodesic validity");
  }
  report["warnings"] = s.warnings;
  st.output_json("graph_quality.json", report);
  for (const auto& w : s.warnings) st.note("warning: " + w);
  if (s.quality) st.note("validity " + detail::fmt_double(s.quality->validity));
  st.finish();
  return s;
}

// ---- train -----------------------------------------------------------------

inline std::string agent_ckpt_name(agent::Variant v) { return std::string("agent-") + agent::to_string(v) + ".ckpt"; }

struct TrainSummary {
  std::int64_t steps = 0;
  std::int64_t goal_events = 0;
  double success_rolling = 0.0;
  std::vector<agent::MetricsRow> metrics;
};

namespace detail {

/// Similarity model, graph and attention heads for a GAM run.
struct GamInputs {
  std::shared_ptr<memory::SimilarityModel> model;
  std::shared_ptr<memory::TopoGraph> graph;
};

inline GamInputs load_gam_inputs(Stage& st) {
  GamInputs in;
  in.model = load_sim(st.input("sim.ckpt"));
  in.graph = std::make_shared<memory::TopoGraph>(memory::load_graph(st.input("graph.json")));
  return in;
}

}  // namespace detail

inline TrainSummary cmd_train(const RunConfig& cfg, std::ostream* log = nullptr) {
  const agent::Variant v = agent::parse_variant(cfg.variant);
  Stage st(cfg, std::string("train-") + agent::to_string(v), log);
  const auto maze = detail::load_maze(cfg);
  agent::AgentConfig ac = cfg.agent;
  ac.variant = v;
  std::unique_ptr<agent::NavMemory> mem;
  if (v == agent::Variant::kGam) {
    st.upstream("build-graph");
    auto in = detail::load_gam_inputs(st);
    mem = std::make_unique<agent::NavMemory>(in.model, in.graph, ac.gam, cfg.eta_scale);
  }
  agent::A2cTrainer tr(maze, ac, cfg.seed, mem.get(), cfg.render);
  std::ostringstream csv;
  agent::write_metrics_header(csv);
  tr.run(&csv);
  st.output(std::string("train-") + agent::to_string(v) + ".csv", csv.str());

  std::vector<nn::NamedTensor> ck;
  tr.export_to(ck, false);
  if (mem) ck.push_back(detail::gam_meta(ac.gam, cfg.eta_scale));
  std::ostringstream bin;
  nn::write_checkpoint(bin, ck);
  st.output(agent_ckpt_name(v), bin.str());

  TrainSummary s;
  s.steps = tr.steps_done();
  s.goal_events = tr.goal_events();
  s.success_rolling = tr.success_rolling();
  s.metrics = tr.metrics();
  st.note(std::to_string(s.steps) + " steps, " + std::to_string(s.goal_events) + " goals, rolling success " +
          detail::fmt_double(s.success_rolling));
  st.finish();
  return s;
}

// ---- eval ------------------------------------------------------------------

struct EvalMode {
  bool novel_starts = false;
  std::optional<maze::Cell> goal;
};

struct EvalSummary {
  std::string stage;
  agent::EvalResult result;
  std::optional<int> goal_node;
  std::string comparison;  // table over every eval in the output directory
};

namespace detail {

/// comparison.csv: one row per eval-*.json in the directory.
inline std::string comparison_table(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    const bool manifest = n.size() > 14 && n.compare(n.size() - 14, 14, ".manifest.json") == 0;
    if (n.rfind("eval-", 0) == 0 && e.path().extension() == ".json" && !manifest) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out = "mode,variant,starts,success_rate,score\n";
  for (const auto& f : files) {
    const auto j = nlohmann::json::parse(read_file(f.string()));
    out += j.at("mode").get<std::string>() + ',' + j.at("variant").get<std::string>() + ',' +
           std::to_string(j.at("outcomes").size()) + ',' + fmt_double(j.at("success_rate").get<double>()) + ',' +
           fmt_double(j.at("scores").at("reward").get<double>()) + '\n';
  }
  return out;
}

}  // namespace detail

/// Runs the trained agent from every start (spawn poses, or the maze's novel
/// start cells) with an optional relocated goal. For GAM the goal node comes
/// from localizing the new goal observation; nothing is retrained.
inline EvalSummary cmd_eval(const RunConfig& cfg, const EvalMode& mode = {}, std::ostream* log = nullptr) {
  const agent::Variant v = agent::parse_variant(cfg.variant);
  const std::string name = std::string(agent::to_string(v)) + detail::stage_suffix(mode.novel_starts, mode.goal);
  Stage st(cfg, "eval-" + name, log);
  st.upstream(std::string("train-") + agent::to_string(v));
  const auto maze = detail::load_maze(cfg);
  const auto tensors = nn::load_checkpoint(st.input(agent_ckpt_name(v)));
  agent::PolicyNet net = agent::PolicyNet::import_from(tensors);
  if (net.variant() != v) throw ConfigError("agent checkpoint holds a different variant");
  std::unique_ptr<agent::NavMemory> mem;
  if (v == agent::Variant::kGam) {
    auto in = detail::load_gam_inputs(st);
    const auto [gcfg, scale] = detail::read_gam_meta(tensors);
    mem = std::make_unique<agent::NavMemory>(in.model, in.graph, gcfg, scale);
    mem->guided().import_from(tensors);
  }

  std::vector<maze::AgentPose> starts;
  if (mode.novel_starts) {
    if (maze->novel_starts.empty()) throw PreconditionError("eval --novel-starts: the maze marks no novel start cells");
    starts = agent::poses_facing_north(maze->novel_starts);
  } else {
    starts = maze->spawn_poses;
  }
  agent::EvalConfig ec;
  ec.max_steps = cfg.eval_max_steps;
  ec.score_steps = cfg.eval_score_steps;
  ec.repeats = cfg.eval_repeats;
  ec.argmax = cfg.eval_argmax;
  ec.seed = cfg.seed;
  ec.goal = mode.goal;
  agent::Evaluator ev(maze, net, mem.get(), ec, cfg.render);

  EvalSummary s;
  s.stage = "eval-" + name;
  s.result = ev.run(starts);
  if (mem) s.goal_node = mem->goal_node();

  nlohmann::json outcomes = nlohmann::json::array();
  std::ostringstream traj;
  traj << "run,start_x,start_y,start_heading,step,x,y,heading,success\n";
  for (std::size_t i = 0; i < s.result.outcomes.size(); ++i) {
    const auto& o = s.result.outcomes[i];
    outcomes.push_back({{"start", detail::pose_json(o.start)}, {"success", o.success}, {"steps", o.steps}});
    for (std::size_t t = 0; t < o.path.size(); ++t)
      traj << i << ',' << o.start.cell.x << ',' << o.start.cell.y << ',' << static_cast<int>(o.start.heading) << ','
           << t << ',' << o.path[t].cell.x << ',' << o.path[t].cell.y << ',' << static_cast<int>(o.path[t].heading)
           << ',' << (o.success ? 1 : 0) << '\n';
  }
  std::string mode_name = mode.novel_starts ? "novel-starts" : "spawns";
  if (mode.goal) mode_name += "+goal";
  nlohmann::json j = {{"variant", agent::to_string(v)},
                      {"mode", mode_name},
                      {"goal", {{"x", ev.goal().x}, {"y", ev.goal().y}}},
                      {"goal_node", s.goal_node ? nlohmann::json(*s.goal_node) : nlohmann::json(nullptr)},
                      {"success_window", cfg.eval_max_steps},
                      {"repeats", cfg.eval_repeats},
                      {"success_rate", s.result.success_rate},
                      {"scores", {{"reward", s.result.score}, {"window", cfg.eval_score_steps}}},
                      {"eta_norm_mean", s.result.eta_norm_mean},
                      {"outcomes", outcomes}};
  st.output_json("eval-" + name + ".json", j);
  st.output("traj-" + name + ".csv", traj.str());
  st.note("success rate " + detail::fmt_double(s.result.success_rate) + ", score " + detail::fmt_double(s.result.score));
  st.finish();
  // An index over all evals so far, not an artifact of this stage: it stays
  // out of the manifest so the digest depends on this run alone.
  s.comparison = detail::comparison_table(st.dir());
  write_file(st.path("comparison.csv"), s.comparison);
  return s;
}

// ---- diag-converge ---------------------------------------------------------

/// Convergence of X <- W X on the built graph. Uses the trained GAM heads when
/// agent-gam.ckpt is present, otherwise freshly initialized ones.
inline attention::ConvergeReport cmd_diag_converge(const RunConfig& cfg, std::ostream* log = nullptr) {
  Stage st(cfg, "diag-converge", log);
  st.upstream("build-graph");
  const auto graph = memory::load_graph(st.input("graph.json"));
  attention::GamConfig gcfg = cfg.agent.gam;
  std::string heads = "initial";
  std::vector<nn::NamedTensor> tensors;
  if (st.exists(agent_ckpt_name(agent::Variant::kGam))) {
    st.upstream("train-gam");
    tensors = nn::load_checkpoint(st.input(agent_ckpt_name(agent::Variant::kGam)));
    gcfg = detail::read_gam_meta(tensors).first;
    heads = "trained";
  }
  auto ga = attention::GuidedAttention::from_graph(graph, gcfg);
  if (tensors.empty()) ga.init(memory::detail::mix_seed(cfg.seed, 0xa77));
  else ga.import_from(tensors);
  const auto rep = attention::converge_diag(graph.neighbors, ga.heads(), graph.features, cfg.diag.k_max, cfg.diag.every,
                                            cfg.diag.tol);
  std::ostringstream csv;
  attention::write_converge_csv(csv, rep);
  st.output("converge.csv", csv.str());
  st.output_json("converge.json", {{"heads", heads},
                                   {"k_max", cfg.diag.k_max},
                                   {"first_k_below_tol", rep.first_k_below},
                                   {"tol", rep.tol},
                                   {"final_gap_to_limit", rep.final_gap},
                                   {"limit_tol", rep.limit_tol},
                                   {"converged", rep.converged()},
                                   {"max_stationary_residual", rep.max_stationary_residual},
                                   {"component_sizes", rep.component_sizes}});
  st.note("final gap to limit " + detail::fmt_double(rep.final_gap));
  st.finish();
  return rep;
}

// ---- sweep-k ---------------------------------------------------------------

struct SweepRow {
  int k = 0;
  bool trained = false;
  double success_rate = std::nan("");
  double score = std::nan("");
  double eta_norm = 0.0;       // mean over nodes of ||eta(node, goal)||
  double raw_diff_norm = 0.0;  // same with K = 0: sqrt(H) ||x_node - x_goal||
};

struct SweepSummary {
  std::vector<SweepRow> rows;
  int best_k = -1;
};

/// For K <= sweep.train_k_max trains a GAM agent with that K and evaluates it
/// from the spawns; larger K only reports the eta norm (initial heads).
inline SweepSummary cmd_sweep_k(const RunConfig& cfg, std::ostream* log = nullptr) {
  Stage st(cfg, "sweep-k", log);
  st.upstream("build-graph");
  const auto maze = detail::load_maze(cfg);
  auto in = detail::load_gam_inputs(st);
  const nn::Vector goal_obs = agent::goal_observation(*maze, maze->goal_cell, cfg.render);

  SweepSummary s;
  for (int k : cfg.sweep.k_values) {
    SweepRow row;
    row.k = k;
    agent::AgentConfig ac = cfg.agent;
    ac.variant = agent::Variant::kGam;
    ac.gam.k = k;
    agent::NavMemory mem(in.model, in.graph, ac.gam, cfg.eta_scale);
    if (k <= cfg.sweep.train_k_max) {
      agent::A2cTrainer tr(maze, ac, cfg.seed, &mem, cfg.render);
      tr.run();
      agent::EvalConfig ec;
      ec.max_steps = cfg.eval_max_steps;
      ec.score_steps = cfg.eval_score_steps;
      ec.repeats = cfg.eval_repeats;
      ec.argmax = cfg.eval_argmax;
      ec.seed = cfg.seed;
      agent::Evaluator ev(maze, tr.net(), &mem, ec, cfg.render);
      const auto res = ev.run(maze->spawn_poses);
      row.trained = true;
      row.success_rate = res.success_rate;
      row.score = res.score;
    } else {
      mem.guided().init(memory::detail::mix_seed(cfg.seed, 0xa77));
      mem.guided().refresh();
      mem.set_goal_observation(goal_obs);
    }
    if (!mem.guided().fresh()) mem.guided().refresh();
    std::tie(row.eta_norm, row.raw_diff_norm) = detail::graph_eta_norms(mem.guided(), mem.goal_node());
    st.note("K=" + std::to_string(k) + (row.trained ? " success " + detail::fmt_double(row.success_rate) : "") +
            " mean |eta| " + detail::fmt_double(row.eta_norm));
    s.rows.push_back(row);
  }
  double best = -1.0;
  for (const auto& r : s.rows)
    if (r.trained && r.success_rate > best) {
      best = r.success_rate;
      s.best_k = r.k;
    }

  std::ostringstream csv;
  csv << "k,trained,success_rate,score,eta_norm_mean,raw_diff_norm\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) {
    csv << r.k << ',' << (r.trained ? 1 : 0) << ',' << (r.trained ? detail::csv_double(r.success_rate) : "") << ','
        << (r.trained ? detail::csv_double(r.score) : "") << ',' << detail::csv_double(r.eta_norm) << ','
        << detail::csv_double(r.raw_diff_norm) << '\n';
    rows.push_back({{"k", r.k},
                    {"trained", r.trained},
                    {"success_rate", r.trained ? nlohmann::json(r.success_rate) : nlohmann::json(nullptr)},
                    {"eta_norm_mean", r.eta_norm}});
  }
  st.output("sweep_k.csv", csv.str());
  st.output_json("sweep_k.json", {{"best_k", s.best_k >= 0 ? nlohmann::json(s.best_k) : nlohmann::json(nullptr)},
                                  {"rows", rows}});
  st.finish();
  return s;
}

}  // namespace gam::harness
