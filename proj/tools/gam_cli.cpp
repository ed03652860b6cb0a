// gam: command-line front end for the navigation pipeline.
//
//   gam explore --maze maze-small --out runs/a
//   gam train-sim --out runs/a
//   gam build-graph --out runs/a
//   gam train --variant gam --out runs/a
//   gam eval --variant gam --out runs/a [--novel-starts] [--goal-cell 7,4]
//   gam diag-converge --out runs/a
//   gam sweep-k --out runs/a

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gam/harness/commands.hpp"

namespace {

using namespace gam;

maze::Cell parse_cell(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t a = 0, b = 0;
    const int x = std::stoi(s.substr(0, comma), &a);
    const int y = std::stoi(s.substr(comma + 1), &b);
    if (a != comma || b != s.size() - comma - 1) throw std::invalid_argument(s);
    return {x, y};
  } catch (const std::exception&) {
    throw ConfigError("--goal-cell expects x,y (got '" + s + "')");
  }
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string maze;
  std::string out;
  bool blind = false;
  bool novel_starts = false;
  std::string goal_cell;
  bool resume = false;
};

harness::RunConfig resolve(const Flags& f) {
  harness::RunConfig cfg = f.config.empty() ? harness::RunConfig{} : harness::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.variant.empty()) cfg.variant = f.variant;
  if (!f.maze.empty()) cfg.maze = f.maze;
  if (!f.out.empty()) cfg.out = f.out;
  if (f.blind) cfg.blind = true;
  cfg.validate();
  return cfg;
}

int run(const std::string& verb, const Flags& f) {
  const harness::RunConfig cfg = resolve(f);
  std::ostream* log = &std::cerr;
  if (verb == "explore") {
    harness::cmd_explore(cfg, log);
  } else if (verb == "train-sim") {
    harness::cmd_train_sim(cfg, f.resume, log);
  } else if (verb == "build-graph") {
    harness::cmd_build_graph(cfg, log);
  } else if (verb == "train") {
    harness::cmd_train(cfg, log);
  } else if (verb == "eval") {
    harness::EvalMode mode;
    mode.novel_starts = f.novel_starts;
    if (!f.goal_cell.empty()) mode.goal = parse_cell(f.goal_cell);
    const auto s = harness::cmd_eval(cfg, mode, log);
    std::cout << s.comparison;
  } else if (verb == "diag-converge") {
    harness::cmd_diag_converge(cfg, log);
  } else if (verb == "sweep-k") {
    const auto s = harness::cmd_sweep_k(cfg, log);
    if (s.best_k >= 0) std::cout << "best K " << s.best_k << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-attention-memory navigation pipeline"};
  app.require_subcommand(1);
  Flags f;
  const char* verbs[] = {"explore", "train-sim", "build-graph", "train", "eval", "diag-converge", "sweep-k"};
  for (const char* v : verbs) {
    auto* sub = app.add_subcommand(v);
    sub->add_option("--config", f.config, "INI config file");
    sub->add_option("--seed", f.seed, "overrides run.seed");
    sub->add_option("--variant", f.variant, "gam, ff, ff-goal or lstm");
    sub->add_option("--maze", f.maze, "maze file or bundled fixture name");
    sub->add_option("--out", f.out, "output directory");
    sub->add_flag("--blind", f.blind, "strip oracle poses from the exploration db");
    if (std::string(v) == "eval") {
      sub->add_flag("--novel-starts", f.novel_starts, "start from the maze's novel start cells");
      sub->add_option("--goal-cell", f.goal_cell, "relocated goal x,y");
    }
    if (std::string(v) == "train-sim") sub->add_flag("--resume", f.resume, "continue from sim.ckpt");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(gam::ExitCode::kConfig);
  }
  try {
    return run(app.get_subcommands().front()->get_name(), f);
  } catch (const gam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
