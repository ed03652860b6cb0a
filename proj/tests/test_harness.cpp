#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "gam/harness/commands.hpp"

using namespace gam;
using namespace gam::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gam_test_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.out = out.string();
  c.explore_steps = 600;
  c.sim.epochs = 3;
  c.sim.n_pairs = 1000;
  c.agent.total_steps = 3000;
  c.agent.n_workers = 1;
  c.agent.hidden = 16;
  c.agent.episode_length = 300;
  c.eval_max_steps = 60;
  c.eval_score_steps = 100;
  c.diag.k_max = 200;
  c.diag.every = 50;
  c.sweep.k_values = {0, 1, 1000};
  c.sweep.train_k_max = 1;
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = read_file(e.path().string());
  return out;
}

bool is_manifest(const std::string& name) { return name.find(".manifest.json") != std::string::npos; }

void run_all(const RunConfig& base) {
  cmd_explore(base);
  cmd_train_sim(base);
  cmd_build_graph(base);
  RunConfig ff = base;
  ff.variant = "ff";
  for (const RunConfig* c : {&base, static_cast<const RunConfig*>(&ff)}) {
    cmd_train(*c);
    cmd_eval(*c);
  }
  cmd_eval(base, {true, std::nullopt});
  cmd_eval(base, {false, maze::Cell{7, 4}});
  cmd_diag_converge(base);
  cmd_sweep_k(base);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p.string())); }

int cli(const std::string& args) {
  const std::string cmd = std::string(GAM_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Shared pipeline run; later tests read its artifacts.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("pipeline"));
    run_all(tiny(*dir_));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static fs::path* dir_;
};
fs::path* Pipeline::dir_ = nullptr;

}  // namespace

// ---- config ----------------------------------------------------------------

TEST(Config, RoundTripsExactly) {
  RunConfig c;
  c.sim.lr = 0.1 + 0.2;
  c.eta_scale = 1.0 / 3.0;
  c.agent.total_steps = 123456789012;
  c.seed = 18446744073709551615ull;
  c.sweep.k_values = {5, 0, 7};
  c.agent.gam.dynamic_w = true;
  c.explore_policy = maze::ExplorePolicy::kWallFollow;
  const std::string ini = to_ini(c);
  const RunConfig back = parse_ini(ini);
  EXPECT_EQ(to_ini(back), ini);
  EXPECT_EQ(back.sim.lr, c.sim.lr);
  EXPECT_EQ(back.eta_scale, c.eta_scale);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.agent.total_steps, c.agent.total_steps);
  EXPECT_EQ(back.sweep.k_values, c.sweep.k_values);
  EXPECT_TRUE(back.agent.gam.dynamic_w);
  EXPECT_EQ(back.explore_policy, maze::ExplorePolicy::kWallFollow);
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig c = parse_ini("[gam]\nk = 5\n");
  EXPECT_EQ(c.agent.gam.k, 5);
  EXPECT_EQ(c.agent.gam.heads, RunConfig{}.agent.gam.heads);
  EXPECT_EQ(c.explore_steps, RunConfig{}.explore_steps);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_ini("[gam]\nkk = 5\n"), ConfigError);
  EXPECT_THROW(parse_ini("[nosuch]\nk = 5\n"), ConfigError);
  EXPECT_THROW(parse_ini("[gam]\nk = five\n"), ConfigError);
  EXPECT_THROW(parse_ini("[gam]\nk = 5x\n"), ConfigError);
  EXPECT_THROW(parse_ini("[eval]\nargmax = maybe\n"), ConfigError);
  EXPECT_THROW(parse_ini("[run]\nseed = -1\n"), ConfigError);
  EXPECT_THROW(parse_ini("[sweep]\nk_values = 1,a\n"), ConfigError);
  EXPECT_THROW(parse_ini("[explore]\npolicy = spiral\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/gam.ini"), ConfigError);
}

TEST(Config, ValidationBounds) {
  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  RunConfig{}.validate();
  bad([](RunConfig& c) { c.maze = "no-such-maze"; });
  bad([](RunConfig& c) { c.variant = "gru"; });
  bad([](RunConfig& c) { c.agent.gam.k = -1; });
  bad([](RunConfig& c) { c.agent.gam.heads = 0; });
  bad([](RunConfig& c) { c.agent.gamma = 1.0; });
  bad([](RunConfig& c) { c.sim.holdout_fraction = 1.0; });
  bad([](RunConfig& c) { c.sim.horizon.t_max = 2; });
  bad([](RunConfig& c) { c.explore_steps = 5; });
  bad([](RunConfig& c) { c.eval_repeats = 0; });
  bad([](RunConfig& c) { c.eta_scale = 0.0; });
  bad([](RunConfig& c) { c.sweep.k_values = {}; });
}

TEST(Config, BundledMazeNamesResolve) {
  RunConfig c;
  c.maze = "maze-large";
  EXPECT_TRUE(fs::is_regular_file(c.maze_path()));
  c.maze = c.maze_path();
  EXPECT_EQ(c.maze_path(), c.maze);
}

// ---- manifest and lock -----------------------------------------------------

TEST(Manifest, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, DigestIgnoresTimingAndTracksContent) {
  RunManifest m;
  m.stage = "train-gam";
  m.config_sha256 = sha256_hex("cfg");
  m.inputs = {{"graph.json", sha256_hex("g")}};
  m.outputs = {{"agent-gam.ckpt", sha256_hex("a")}};
  m.parents = {{"explore", "e"}};
  const std::string d = m.content_digest();
  m.wall_clock_s = 99.0;
  EXPECT_EQ(m.content_digest(), d);
  m.outputs[0].sha256 = sha256_hex("b");
  EXPECT_NE(m.content_digest(), d);
  m.digest = m.content_digest();
  const RunManifest back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_THROW(RunManifest::from_json(nlohmann::json{{"stage", "x"}}), ConfigError);
}

TEST(Lock, OneHolderPerDirectory) {
  const fs::path dir = scratch("lock");
  {
    DirLock a(dir);
    EXPECT_THROW(DirLock b(dir), PreconditionError);
    RunConfig c = tiny(dir);
    EXPECT_THROW(cmd_explore(c), PreconditionError);
  }
  DirLock again(dir);
  fs::remove_all(dir);
}

// ---- stages ----------------------------------------------------------------

TEST(Stages, MissingUpstreamIsAPreconditionError) {
  const fs::path dir = scratch("missing");
  const RunConfig c = tiny(dir);
  EXPECT_THROW(cmd_train_sim(c), PreconditionError);
  EXPECT_THROW(cmd_build_graph(c), PreconditionError);
  EXPECT_THROW(cmd_eval(c), PreconditionError);
  EXPECT_THROW(cmd_sweep_k(c), PreconditionError);
  RunConfig gam = c;
  EXPECT_THROW(cmd_train(gam), PreconditionError);
  fs::remove_all(dir);
}

TEST(Stages, ExploreCoverageAndBlindSchema) {
  const fs::path dir = scratch("blind");
  RunConfig c = tiny(dir);
  c.explore_steps = 2000;
  const auto s = cmd_explore(c);
  EXPECT_EQ(s.records, 2000);
  EXPECT_GE(s.coverage, 0.5);
  const std::string sighted = read_file((dir / "explore.jsonl").string());
  EXPECT_NE(sighted.find("\"pose\""), std::string::npos);

  c.blind = true;
  cmd_explore(c);
  std::istringstream is(read_file((dir / "explore.jsonl").string()));
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_FALSE(j.contains("pose"));
    EXPECT_TRUE(j.contains("features"));
    ++n;
  }
  EXPECT_EQ(n, 2000);

  // Without poses the graph still builds, minus the oracle overlay.
  cmd_train_sim(c);
  const auto g = cmd_build_graph(c);
  EXPECT_FALSE(g.quality.has_value());
  EXPECT_FALSE(fs::exists(dir / "graph_edges.csv"));
  EXPECT_TRUE(read_json(dir / "graph_quality.json").at("oracle").is_null());
  fs::remove_all(dir);
}

TEST(Stages, ResumedSimilarityTrainingMatchesOneRun) {
  const fs::path a = scratch("sim_full"), b = scratch("sim_resumed");
  RunConfig full = tiny(a);
  cmd_explore(full);
  cmd_train_sim(full);

  RunConfig part = tiny(b);
  cmd_explore(part);
  part.sim.epochs = 2;
  const auto first = cmd_train_sim(part);
  EXPECT_EQ(first.epoch_loss.size(), 2u);
  part.sim.epochs = 3;
  const auto resumed = cmd_train_sim(part, true);
  EXPECT_EQ(resumed.first_epoch, 2);
  EXPECT_EQ(read_file((a / "sim.ckpt").string()), read_file((b / "sim.ckpt").string()));
  EXPECT_EQ(read_file((a / "sim_metrics.csv").string()), read_file((b / "sim_metrics.csv").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Stages, DisconnectedGraphIsReported) {
  const fs::path dir = scratch("disconnected");
  RunConfig c = tiny(dir);
  c.explore_steps = 2000;  // the seed-1 walk reaches the goal and respawns
  c.graph.l_global = 0;    // chains only: one component per trajectory
  const auto e = cmd_explore(c);
  ASSERT_GE(e.trajectories, 2);
  cmd_train_sim(c);
  const auto g = cmd_build_graph(c);
  EXPECT_EQ(g.components, e.trajectories);
  ASSERT_FALSE(g.warnings.empty());
  EXPECT_NE(g.warnings.front().find("components"), std::string::npos);
  EXPECT_EQ(read_json(dir / "graph_quality.json").at("warnings").size(), g.warnings.size());
  fs::remove_all(dir);
}

TEST_F(Pipeline, GraphReportCountsEdges) {
  const auto q = read_json(*dir_ / "graph_quality.json");
  EXPECT_EQ(q.at("edges").get<int>(), q.at("l_global").get<int>() + q.at("consecutive_edges").get<int>());
  EXPECT_EQ(q.at("oracle").at("classifier_edges"), q.at("classifier_edges"));
  const double v = q.at("oracle").at("validity").get<double>();
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
  std::istringstream edges(read_file((*dir_ / "graph_edges.csv").string()));
  std::string line;
  int rows = -1;
  while (std::getline(edges, line)) ++rows;
  EXPECT_EQ(rows, q.at("edges").get<int>());
}

TEST_F(Pipeline, EvalHasOneOutcomePerStart) {
  const auto m = maze::load_maze_file(tiny(*dir_).maze_path());
  const auto spawns = read_json(*dir_ / "eval-gam.json");
  EXPECT_EQ(spawns.at("outcomes").size(), m.spawn_poses.size());
  EXPECT_EQ(spawns.at("mode"), "spawns");
  EXPECT_TRUE(spawns.at("scores").contains("reward"));
  const auto novel = read_json(*dir_ / "eval-gam-novel-starts.json");
  EXPECT_EQ(novel.at("outcomes").size(), m.novel_starts.size());
  const auto moved = read_json(*dir_ / "eval-gam-goal-7-4.json");
  EXPECT_EQ(moved.at("goal").at("x"), 7);
  EXPECT_EQ(moved.at("goal").at("y"), 4);
  EXPECT_TRUE(moved.at("goal_node").is_number_integer());
  EXPECT_TRUE(fs::exists(*dir_ / "traj-gam-goal-7-4.csv"));
}

TEST_F(Pipeline, ComparisonTableListsEveryEval) {
  const std::string table = read_file((*dir_ / "comparison.csv").string());
  EXPECT_EQ(table.rfind("mode,variant,starts,success_rate,score\n", 0), 0u);
  EXPECT_NE(table.find("spawns,gam,"), std::string::npos);
  EXPECT_NE(table.find("spawns,ff,"), std::string::npos);
  EXPECT_NE(table.find("novel-starts,gam,"), std::string::npos);
  EXPECT_NE(table.find("spawns+goal,gam,"), std::string::npos);
}

TEST_F(Pipeline, ManifestsChainToEveryUpstreamStage) {
  const auto ev = load_manifest(*dir_, "eval-gam");
  for (const char* up : {"train-gam", "build-graph", "train-sim", "explore"}) {
    ASSERT_TRUE(ev.parents.count(up)) << up;
    EXPECT_EQ(ev.parents.at(up), load_manifest(*dir_, up).digest) << up;
  }
  EXPECT_EQ(ev.digest, ev.content_digest());
  for (const auto& o : ev.outputs) EXPECT_EQ(o.sha256, sha256_file((*dir_ / o.name).string())) << o.name;
  const auto ff = load_manifest(*dir_, "eval-ff");
  EXPECT_TRUE(ff.parents.count("train-ff"));
  EXPECT_FALSE(ff.parents.count("build-graph"));
  EXPECT_EQ(parse_ini(read_file((*dir_ / "eval-gam.config.ini").string())).out, dir_->string());
}

TEST_F(Pipeline, RerunIsByteIdentical) {
  const auto before = snapshot(*dir_);
  run_all(tiny(*dir_));
  const auto after = snapshot(*dir_);
  ASSERT_EQ(before.size(), after.size());
  for (const auto& [name, bytes] : before) {
    if (is_manifest(name)) {
      EXPECT_EQ(nlohmann::json::parse(bytes).at("digest"), nlohmann::json::parse(after.at(name)).at("digest")) << name;
    } else {
      EXPECT_EQ(bytes, after.at(name)) << name;
    }
  }
}

TEST_F(Pipeline, SweepKColumns) {
  std::istringstream is(read_file((*dir_ / "sweep_k.csv").string()));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "k,trained,success_rate,score,eta_norm_mean,raw_diff_norm");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (line.back() == ',') f.emplace_back();
    rows.push_back(f);
  }
  ASSERT_EQ(rows.size(), 3u);
  // K = 0: eta is the raw feature difference.
  EXPECT_NEAR(std::stod(rows[0][4]), std::stod(rows[0][5]), 1e-12 * std::stod(rows[0][5]));
  EXPECT_EQ(rows[0][1], "1");
  EXPECT_EQ(rows[2][1], "0");
  EXPECT_TRUE(rows[2][2].empty());
  EXPECT_LT(std::stod(rows[2][4]), std::stod(rows[0][4]));
  const auto j = read_json(*dir_ / "sweep_k.json");
  ASSERT_TRUE(j.at("best_k").is_number_integer());
  const int best = j.at("best_k");
  EXPECT_TRUE(best == 0 || best == 1);
}

TEST_F(Pipeline, DiagConvergeCsv) {
  std::istringstream is(read_file((*dir_ / "converge.csv").string()));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "k,max_row_gap,gap_to_limit,component_flags");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 200 / 50 + 1);
  EXPECT_EQ(read_json(*dir_ / "converge.json").at("heads"), "trained");
}

TEST_F(Pipeline, TrainingCurveHasHeaderAndRows) {
  const std::string csv = read_file((*dir_ / "train-gam.csv").string());
  EXPECT_EQ(csv.rfind("step,episode_reward,success_rolling,policy_entropy,value_loss,eta_norm_mean\n", 0), 0u);
  // 3000 steps of 300-step episodes on one worker.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 10);
}

// ---- command line ----------------------------------------------------------

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(cli("explore --out " + dir.string() + " --seed 3"), 0);
  EXPECT_TRUE(fs::exists(dir / "explore.jsonl"));
  EXPECT_EQ(cli("train --variant gam --out " + dir.string()), 3);          // no graph yet
  EXPECT_EQ(cli("train --variant gru --out " + dir.string()), 2);          // unknown variant
  EXPECT_EQ(cli("explore --maze no-such-maze --out " + dir.string()), 2);  // unresolvable path
  EXPECT_EQ(cli("explore --config /nonexistent.ini --out " + dir.string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("eval --goal-cell 7 --out " + dir.string()), 2);

  // Exploding similarity training surfaces as a numerical failure.
  const fs::path ini = dir / "diverge.ini";
  write_file(ini.string(), "[sim]\nlr = 1e300\nepochs = 2\nn_pairs = 200\n");
  EXPECT_EQ(cli("train-sim --config " + ini.string() + " --out " + dir.string()), 4);
  fs::remove_all(dir);
}

TEST(Cli, FlagsOverrideConfig) {
  const fs::path dir = scratch("cli_override");
  const fs::path ini = dir.string() + ".ini";
  write_file(ini.string(), "[run]\nseed = 5\n[explore]\nsteps = 300\n");
  ASSERT_EQ(cli("explore --config " + ini.string() + " --seed 9 --blind --out " + dir.string()), 0);
  const RunConfig used = load_config((dir / "explore.config.ini").string());
  EXPECT_EQ(used.seed, 9u);
  EXPECT_EQ(used.explore_steps, 300);
  EXPECT_TRUE(used.blind);
  fs::remove_all(dir);
  fs::remove(ini);
}
