#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gam/agent/evaluate.hpp"
#include "gam/nn/grad_check.hpp"
#include "random_graphs.hpp"

using namespace gam;
using namespace gam::agent;

namespace {

std::shared_ptr<const maze::MazeSpec> fixture(const std::string& name) {
  return std::make_shared<const maze::MazeSpec>(
      maze::load_maze_file(std::string(GAM_DATA_DIR) + "/mazes/" + name + ".txt"));
}

AgentConfig small_config(Variant v, std::int64_t steps, int workers) {
  AgentConfig c;
  c.variant = v;
  c.total_steps = steps;
  c.n_workers = workers;
  c.hidden = 16;
  c.episode_length = 300;
  return c;
}

std::string train_csv(const AgentConfig& cfg, std::uint64_t seed) {
  A2cTrainer tr(fixture("maze-small"), cfg, seed);
  std::ostringstream os;
  write_metrics_header(os);
  tr.run(&os);
  return os.str();
}

}  // namespace

TEST(Variant, ParseAndName) {
  for (auto v : {Variant::kGam, Variant::kFf, Variant::kFfGoal, Variant::kLstm})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(parse_variant("ff-nogoal"), Variant::kFf);
  EXPECT_THROW(parse_variant("a3c"), ConfigError);
}

TEST(MakeState, Shapes) {
  const nn::Vector obs = nn::Vector::LinSpaced(132, 0.0, 1.0);
  attention::GuidedFeature g;
  g.eta = nn::Vector::Constant(4 * 32, 0.5);
  EXPECT_EQ(make_state(Variant::kFf, obs, nullptr, nullptr).size(), 132);
  EXPECT_EQ(make_state(Variant::kLstm, obs, nullptr, nullptr).size(), 132);
  const nn::Vector s = make_state(Variant::kGam, obs, &g, nullptr);
  ASSERT_EQ(s.size(), 132 + 128);
  EXPECT_EQ(s.head(132), obs);
  EXPECT_EQ(s.tail(128), g.eta);
  const nn::Vector goal = nn::Vector::Ones(132);
  const nn::Vector fg = make_state(Variant::kFfGoal, obs, nullptr, &goal);
  ASSERT_EQ(fg.size(), 264);
  EXPECT_EQ(fg.tail(132), goal);
  EXPECT_THROW(make_state(Variant::kGam, obs, nullptr, nullptr), PreconditionError);
  EXPECT_THROW(make_state(Variant::kFfGoal, obs, nullptr, nullptr), PreconditionError);
}

TEST(MakeState, GamAtGoalNodeAppendsZeros) {
  std::mt19937_64 rng(2);
  auto g = gam::testing::random_graph(8, 4, 6, rng);
  attention::GamConfig cfg;
  cfg.heads = 2;
  auto ga = attention::GuidedAttention::from_graph(g, cfg);
  ga.init(4);
  ga.refresh();
  const auto f = ga.eta(5, 5);
  const nn::Vector s = make_state(Variant::kGam, nn::Vector::Ones(3), &f, nullptr);
  EXPECT_TRUE(s.tail(8).isZero(0.0));
}

TEST(SelectAction, UniformWhenEpsIsOne) {
  std::mt19937_64 rng(3);
  nn::Vector logits(7);
  logits << 5.0, -3.0, 0.0, 1.0, 2.0, -1.0, 0.5;
  const int n = 10000;
  std::vector<int> count(7, 0);
  for (int i = 0; i < n; ++i) ++count[static_cast<std::size_t>(select_action(logits, 0.0, 1.0, rng).action)];
  const double p = 1.0 / 7.0;
  const double sigma = std::sqrt(n * p * (1.0 - p));
  for (int c : count) EXPECT_NEAR(c, n * p, 3.0 * sigma);
}

TEST(SelectAction, DominantLogitAlwaysChosen) {
  std::mt19937_64 rng(4);
  nn::Vector logits = nn::Vector::Zero(7);
  logits[4] = 1000.0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = select_action(logits, 0.0, 0.0, rng);
    EXPECT_EQ(c.action, 4);
    EXPECT_NEAR(c.log_prob, 0.0, 1e-12);
  }
}

TEST(SelectAction, EntropyAndLogProbComeFromPi) {
  std::mt19937_64 rng(5);
  const auto c = select_action(nn::Vector::Zero(7), 1.5, 1.0, rng);
  EXPECT_NEAR(c.entropy, std::log(7.0), 1e-12);
  EXPECT_NEAR(c.log_prob, -std::log(7.0), 1e-12);
  EXPECT_EQ(c.value, 1.5);
  EXPECT_THROW(select_action(nn::Vector::Zero(7), 0.0, 1.5, rng), PreconditionError);
}

TEST(ComputeReturns, Examples) {
  const auto r = compute_returns({-0.05, -0.05, 10.0}, 0.99, 123.0, true);
  EXPECT_NEAR(r[0], -0.05 - 0.0495 + 9.801, 1e-12);
  EXPECT_NEAR(r[0], 9.7015, 1e-12);
  for (double v : compute_returns({0.0, 0.0, 0.0, 0.0}, 0.9, 0.0)) EXPECT_EQ(v, 0.0);
  const std::vector<double> rw{1.0, -2.0, 3.5};
  EXPECT_EQ(compute_returns(rw, 0.5, 0.0)[2], 3.5);
  const auto g0 = compute_returns(rw, 0.5, 7.0);
  EXPECT_EQ(g0[2], 3.5 + 0.5 * 7.0);
}

TEST(ComputeReturns, GammaZeroIsReward) {
  // gamma = 0 is outside the trainer's config range but the formula allows it.
  const std::vector<double> rw{1.0, -2.0, 3.5, 10.0};
  EXPECT_EQ(compute_returns(rw, 0.0, 99.0), rw);
}

TEST(ComputeReturns, RecursionAndEpisodeBoundaries) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> rw(40), tv(40, 0.0);
  std::vector<StepEnd> ends(40, StepEnd::kNone);
  for (auto& x : rw) x = u(rng);
  ends[9] = StepEnd::kTerminal;
  ends[24] = StepEnd::kTruncated;
  tv[24] = 4.25;
  const double gamma = 0.97, boot = -1.5;
  const auto r = compute_returns(rw, ends, tv, gamma, boot);
  for (std::size_t t = 0; t < 40; ++t) {
    const double next = t + 1 == 40 ? boot : (ends[t] == StepEnd::kTerminal ? 0.0 : ends[t] == StepEnd::kTruncated ? tv[t] : r[t + 1]);
    EXPECT_EQ(r[t], rw[t] + gamma * next) << "t=" << t;
  }
  EXPECT_THROW(compute_returns(rw, std::vector<StepEnd>(3), tv, gamma, boot), PreconditionError);
}

TEST(A2cLoss, VanishesForCertainPolicyAndFittedValue) {
  nn::Matrix logits = nn::Matrix::Constant(7, 3, -200.0);
  const std::vector<int> actions{0, 3, 6};
  for (int c = 0; c < 3; ++c) logits(actions[static_cast<std::size_t>(c)], c) = 200.0;
  nn::Vector v(3);
  v << 1.0, -2.0, 0.5;
  const auto t = a2c_loss(logits, v, actions, {1.0, -2.0, 0.5}, 0.01);
  EXPECT_NEAR(t.loss, 0.0, 1e-12);
}

TEST(A2cLoss, UniformPolicyEntropyTerm) {
  const nn::Matrix logits = nn::Matrix::Zero(7, 5);
  const nn::Vector v = nn::Vector::Constant(5, 2.0);
  const auto t = a2c_loss(logits, v, {0, 1, 2, 3, 4}, std::vector<double>(5, 2.0), 0.01);
  EXPECT_NEAR(t.entropy, std::log(7.0), 1e-12);
  EXPECT_NEAR(t.loss, -0.01 * std::log(7.0), 1e-12);
  EXPECT_THROW(a2c_loss(logits, v, {0, 1}, std::vector<double>(5, 2.0), 0.01), PreconditionError);
  nn::Matrix bad = logits;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(a2c_loss(bad, v, {0, 1, 2, 3, 4}, std::vector<double>(5, 2.0), 0.01), NumericalError);
}

TEST(A2cLoss, OutputGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  nn::Matrix logits(7, 6);
  nn::Vector v(6);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
  const std::vector<int> actions{0, 2, 4, 6, 1, 3};
  const std::vector<double> ret{1.0, -0.5, 2.0, 0.3, -1.2, 0.0};
  std::vector<double> adv;
  for (int c = 0; c < 6; ++c) adv.push_back(ret[static_cast<std::size_t>(c)] - v[c]);
  nn::Matrix dl;
  nn::Vector dv;
  a2c_loss(logits, v, actions, ret, 0.05, &dl, &dv, &adv);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    nn::Matrix lp = logits, lm = logits;
    lp.data()[i] += h;
    lm.data()[i] -= h;
    const double num = (a2c_loss(lp, v, actions, ret, 0.05, nullptr, nullptr, &adv).loss -
                        a2c_loss(lm, v, actions, ret, 0.05, nullptr, nullptr, &adv).loss) / (2 * h);
    EXPECT_NEAR(dl.data()[i], num, 1e-7);
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    nn::Vector vp = v, vm = v;
    vp[i] += h;
    vm[i] -= h;
    const double num = (a2c_loss(logits, vp, actions, ret, 0.05, nullptr, nullptr, &adv).loss -
                        a2c_loss(logits, vm, actions, ret, 0.05, nullptr, nullptr, &adv).loss) / (2 * h);
    EXPECT_NEAR(dv[i], num, 1e-7);
  }
}

TEST(PolicyNet, OutputsAValidDistribution) {
  std::mt19937_64 rng(8);
  for (auto v : {Variant::kFf, Variant::kLstm}) {
    PolicyNet net(v, 10, 12);
    net.init(9);
    nn::LstmState st = net.zero_state(5);
    for (int step = 0; step < 20; ++step) {
      const nn::Matrix s = nn::Matrix::Random(10, 5) * 3.0;
      const nn::Matrix out = net.act(s, st);
      ASSERT_EQ(out.rows(), kOutputRows);
      for (int c = 0; c < 5; ++c) EXPECT_NEAR(nn::softmax(out.col(c).head(7)).sum(), 1.0, 1e-9);
    }
  }
}

TEST(PolicyNet, CheckpointRoundTrip) {
  for (auto v : {Variant::kGam, Variant::kLstm}) {
    PolicyNet net(v, 9, 7);
    net.init(10);
    std::vector<nn::NamedTensor> t;
    net.export_to(t, true);
    std::stringstream ss;
    nn::write_checkpoint(ss, t);
    PolicyNet back = PolicyNet::import_from(nn::read_checkpoint(ss));
    EXPECT_EQ(back.variant(), v);
    const nn::Matrix s = nn::Matrix::Random(9, 3);
    nn::LstmState a = net.zero_state(3), b = back.zero_state(3);
    EXPECT_EQ(net.act(s, a), back.act(s, b));
  }
  EXPECT_THROW(PolicyNet::import_from({}), ConfigError);
}

// The full loss path on a 5-step GAM rollout: policy and value weights plus
// the attention parameters behind eta, with the advantage held fixed.
class RolloutGrad : public ::testing::TestWithParam<int> {};

TEST_P(RolloutGrad, GamLossMatchesFiniteDifferences) {
  const int k = GetParam();
  std::mt19937_64 rng(20 + static_cast<unsigned>(k));
  auto g = gam::testing::random_graph(10, 4, 8, rng);
  attention::GamConfig gc;
  gc.heads = 2;
  gc.k = k;
  auto ga = attention::GuidedAttention::from_graph(g, gc);
  ga.init(21);
  const int obs_dim = 5;
  PolicyNet net(Variant::kGam, obs_dim + ga.eta_size(), 6);
  net.init(22);
  {  // undo the near-uniform policy initialisation so logits vary
    nn::Rng r(25);
    for (auto* st : net.param_stores()) st->init_glorot(r);
  }

  const int steps = 5, goal = 9;
  std::vector<nn::Vector> obs;
  std::vector<std::vector<int>> nodes;
  for (int t = 0; t < steps; ++t) {
    obs.push_back(nn::Vector::Random(obs_dim));
    nodes.push_back({(3 * t + 1) % 9});
  }
  const std::vector<int> actions{1, 4, 0, 6, 2};
  const std::vector<double> returns{0.7, -0.3, 1.9, 0.0, -1.1};
  const std::vector<double> adv{0.5, -0.8, 1.2, 0.1, -0.4};
  const nn::LstmState init = net.zero_state(1);

  auto loss = [&](bool bp) {
    ga.refresh();
    std::vector<nn::Matrix> inputs;
    for (int t = 0; t < steps; ++t) {
      const auto f = ga.eta(nodes[static_cast<std::size_t>(t)][0], goal);
      inputs.push_back(make_state(Variant::kGam, obs[static_cast<std::size_t>(t)], &f, nullptr));
    }
    const auto terms = rollout_loss(net, inputs, init, {}, actions, returns, 0.05, bp, ga.eta_size(), &nodes,
                                    [&](int node, const nn::Vector& d) { ga.accumulate(node, goal, d); }, &adv);
    if (bp) ga.backward();
    return terms.loss;
  };
  std::vector<nn::ParamStore*> stores = net.param_stores();
  for (auto* st : ga.param_stores()) stores.push_back(st);
  const auto r = nn::grad_check(loss, stores, 150, 23);
  EXPECT_GE(r.coordinates, 100);
  EXPECT_LE(r.max_rel_err, 1e-4) << "K=" << k;

  // Attention parameters alone, so their small share is not drowned out.
  const auto ra = nn::grad_check(loss, ga.param_stores(), 100, 24);
  double head_grad = 0.0;
  for (auto* st : ga.param_stores()) head_grad += st->grad_squared_norm();
  EXPECT_GT(head_grad, 1e-8);  // the eta path is actually exercised
  EXPECT_LE(ra.max_rel_err, 1e-4) << "K=" << k << " abs " << ra.max_abs_err;
}

INSTANTIATE_TEST_SUITE_P(K, RolloutGrad, ::testing::Values(1, 3, 5));

TEST(RolloutGrad, LstmThroughResets) {
  PolicyNet net(Variant::kLstm, 4, 5);
  net.init(30);
  std::mt19937_64 rng(31);
  std::vector<nn::Matrix> inputs;
  for (int t = 0; t < 6; ++t) inputs.push_back(nn::Matrix::Random(4, 2));
  std::vector<std::vector<std::uint8_t>> reset(6, {0, 0});
  reset[3][1] = 1;
  nn::LstmState init{nn::Matrix::Random(5, 2), nn::Matrix::Random(5, 2)};
  const std::vector<int> actions{0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4};
  std::vector<double> returns, adv;
  for (int i = 0; i < 12; ++i) {
    returns.push_back(0.1 * i - 0.5);
    adv.push_back(0.3 - 0.05 * i);
  }
  auto loss = [&](bool bp) { return rollout_loss(net, inputs, init, reset, actions, returns, 0.02, bp, 0, nullptr, {}, &adv).loss; };
  const auto r = nn::grad_check(loss, net.param_stores(), 150, 32);
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AgentConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AgentConfig{};
  c.n_workers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AgentConfig, EpsilonSchedule) {
  AgentConfig c;
  c.total_steps = 1000;
  EXPECT_DOUBLE_EQ(c.eps_at(0), 0.1);
  EXPECT_NEAR(c.eps_at(250), 0.06, 1e-15);
  EXPECT_DOUBLE_EQ(c.eps_at(500), 0.02);
  EXPECT_DOUBLE_EQ(c.eps_at(900), 0.02);
}

TEST(Train, GamNeedsMemory) {
  EXPECT_THROW(A2cTrainer(fixture("maze-small"), small_config(Variant::kGam, 10, 1), 1), PreconditionError);
}

TEST(Train, ZeroStepsKeepsInitialParameters) {
  const auto cfg = small_config(Variant::kFf, 0, 2);
  A2cTrainer tr(fixture("maze-small"), cfg, 5);
  std::vector<nn::NamedTensor> before;
  tr.export_to(before, false);
  std::ostringstream os;
  tr.run(&os);
  EXPECT_TRUE(os.str().empty());
  EXPECT_TRUE(tr.metrics().empty());
  std::vector<nn::NamedTensor> after;
  tr.export_to(after, false);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].value, after[i].value);
}

TEST(Train, SingleWorkerRunsAreIdentical) {
  for (auto v : {Variant::kFf, Variant::kLstm, Variant::kFfGoal}) {
    const auto cfg = small_config(v, 1500, 1);
    const std::string a = train_csv(cfg, 11), b = train_csv(cfg, 11);
    EXPECT_EQ(a, b) << to_string(v);
    EXPECT_GT(std::count(a.begin(), a.end(), '\n'), 3);
    EXPECT_NE(a, train_csv(cfg, 12));
  }
}

TEST(Train, EpisodeRewardBookkeeping) {
  auto cfg = small_config(Variant::kFf, 12000, 4);
  A2cTrainer tr(fixture("maze-small"), cfg, 13);
  tr.run();
  ASSERT_FALSE(tr.metrics().empty());
  int goals = 0;
  for (const auto& row : tr.metrics()) {
    EXPECT_EQ(row.episode_steps, cfg.episode_length);
    EXPECT_NEAR(row.episode_reward, 10.0 * row.goals - 0.05 * (row.episode_steps - row.goals), 1e-9);
    EXPECT_GE(row.success_rolling, 0.0);
    EXPECT_LE(row.success_rolling, 1.0);
    goals += row.goals;
  }
  EXPECT_GT(goals, 0);
}

TEST(Evaluate, OneOutcomePerStartAndPaths) {
  auto maze = fixture("maze-small");
  PolicyNet net(Variant::kFf, 132, 8);
  net.init(3);
  EvalConfig ec;
  ec.max_steps = 50;
  ec.score_steps = 100;
  Evaluator ev(maze, net, nullptr, ec);
  const auto res = ev.run(maze->spawn_poses);
  ASSERT_EQ(res.outcomes.size(), maze->spawn_poses.size());
  for (const auto& o : res.outcomes) {
    EXPECT_LE(o.steps, 50);
    EXPECT_EQ(o.path.size(), static_cast<std::size_t>(o.steps) + 1);
    EXPECT_EQ(o.path.front(), o.start);
    if (o.success) {
      EXPECT_EQ(o.path.back().cell, maze->goal_cell);
    }
    for (const auto& p : o.path) EXPECT_TRUE(maze->is_free(p.cell));
  }
  // 100 steps, each worth +10 or -0.05.
  const double goals = (res.score + 5.0) / 10.05;
  EXPECT_NEAR(goals, std::round(goals), 1e-9);
  EXPECT_THROW(ev.run({}), PreconditionError);
}

TEST(Evaluate, ArgmaxModeIsDeterministic) {
  auto maze = fixture("maze-small");
  PolicyNet net(Variant::kLstm, 132, 8);
  net.init(4);
  EvalConfig ec;
  ec.argmax = true;
  ec.max_steps = 40;
  ec.score_steps = 0;
  ec.seed = 1;
  const auto a = Evaluator(maze, net, nullptr, ec).run(maze->spawn_poses);
  ec.seed = 2;
  const auto b = Evaluator(maze, net, nullptr, ec).run(maze->spawn_poses);
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) EXPECT_EQ(a.outcomes[i].path, b.outcomes[i].path);
}

TEST(Evaluate, RelocatedGoalMustBeFree) {
  auto maze = fixture("maze-small");
  PolicyNet net(Variant::kFf, 132, 8);
  EvalConfig ec;
  ec.goal = maze::Cell{0, 0};
  EXPECT_THROW(Evaluator(maze, net, nullptr, ec), PreconditionError);
}

// An untrained network is close to uniform, so its success rate should sit
// near that of uniformly random actions (oracle rollouts over 100 seeds).
TEST(Evaluate, UntrainedPolicyMatchesRandomWalk) {
  auto maze = fixture("maze-large");
  std::uniform_int_distribution<int> any(0, maze::kNumActions - 1);
  int hits = 0, runs = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    maze::MazeEnv env(maze, {}, seed, 500);
    std::mt19937_64 rng(seed + 1000);
    for (const auto& s : maze->spawn_poses) {
      env.reset_to(s);
      ++runs;
      for (int t = 0; t < 500; ++t)
        if (env.step(any(rng)).reached_goal) {
          ++hits;
          break;
        }
    }
  }
  const double walk = static_cast<double>(hits) / runs;

  PolicyNet net(Variant::kFf, 132, 32);
  net.init(6);
  EvalConfig ec;
  ec.repeats = 30;
  ec.score_steps = 0;
  const double rate = Evaluator(maze, net, nullptr, ec).run(maze->spawn_poses).success_rate;
  EXPECT_NEAR(rate, walk, 0.08) << "random walk " << walk;
}
