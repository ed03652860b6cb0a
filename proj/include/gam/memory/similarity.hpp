#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gam/error.hpp"
#include "gam/linalg.hpp"
#include "gam/maze/explore.hpp"
#include "gam/memory/pairs.hpp"
#include "gam/nn/checkpoint.hpp"
#include "gam/nn/functional.hpp"
#include "gam/nn/mlp.hpp"
#include "gam/nn/optim.hpp"

namespace gam::memory {

struct SimilarityConfig {
  int obs_dim = 132;
  int embed_dim = 32;
  int encoder_hidden = 64;
  int head_hidden = 32;
};

/// Siamese connection classifier. A shared encoder maps an observation to an
/// embedding x (the node feature); the head sees the element-wise squared
/// difference of two embeddings and returns a connection probability, so
/// phi(a, b) == phi(b, a) and nearby embeddings mean likely connection.
class SimilarityModel {
 public:
  SimilarityModel() : SimilarityModel(SimilarityConfig{}) {}
  explicit SimilarityModel(const SimilarityConfig& cfg)
      : cfg_(cfg),
        encoder_({{cfg.obs_dim, cfg.encoder_hidden, cfg.embed_dim}, nn::Activation::kRelu, nn::OutputMode::kLinear}),
        head_({{cfg.embed_dim, cfg.head_hidden, 1}, nn::Activation::kRelu, nn::OutputMode::kSigmoid}) {}

  const SimilarityConfig& config() const { return cfg_; }
  int embed_dim() const { return cfg_.embed_dim; }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& head() { return head_; }
  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& head() const { return head_; }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    encoder_.params().init_glorot(rng);
    head_.params().init_glorot(rng);
  }

  /// Embeddings of observation columns (obs_dim x B) -> (B x embed_dim) rows.
  RowMatrix embed(const nn::Matrix& obs_cols) const { return encoder_.forward(obs_cols).output.transpose(); }

  nn::Vector embed(const nn::Vector& obs) const { return encoder_.forward(obs); }

  double prob(const nn::Vector& obs_a, const nn::Vector& obs_b) const {
    const nn::Vector d = (embed(obs_a) - embed(obs_b)).cwiseAbs2();
    return head_.forward(d)[0];
  }

  /// phi between one embedding and every row of `nodes`.
  nn::Vector prob_against(const nn::Vector& x, const RowMatrix& nodes) const {
    nn::Matrix d = (nodes.rowwise() - x.transpose()).cwiseAbs2().transpose();
    return head_.forward(d).output.row(0).transpose();
  }

  /// phi for arbitrary embedding pairs given as columns.
  nn::Vector prob_embedded(const nn::Matrix& xa, const nn::Matrix& xb) const {
    nn::Matrix d = (xa - xb).cwiseAbs2();
    return head_.forward(d).output.row(0).transpose();
  }

  /// Mean binary cross-entropy of a batch; with `backprop`, gradients of that
  /// mean are accumulated into encoder and head. Returns (loss, #correct).
  std::pair<double, int> batch_loss(const nn::Matrix& obs_a, const nn::Matrix& obs_b, const std::vector<int>& labels,
                                    bool backprop) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    auto ra = encoder_.forward(obs_a);
    auto rb = encoder_.forward(obs_b);
    nn::Matrix diff = ra.output - rb.output;
    nn::Matrix sq = diff.cwiseAbs2();
    auto rh = head_.forward(sq);
    double loss = 0.0;
    int correct = 0;
    nn::Matrix dp(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = rh.output(0, i);
      const int y = labels[static_cast<std::size_t>(i)];
      loss += nn::binary_cross_entropy(p, y);
      correct += ((p >= 0.5) == (y == 1)) ? 1 : 0;
      dp(0, i) = nn::binary_cross_entropy_grad(p, y) / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (backprop) {
      nn::Matrix dsq = head_.backward(rh.tape, dp);
      nn::Matrix dxa = (2.0 * diff.array() * dsq.array()).matrix();
      encoder_.backward(ra.tape, dxa);
      encoder_.backward(rb.tape, -dxa);
    }
    return {loss, correct};
  }

  void export_to(std::vector<nn::NamedTensor>& out, bool with_optimizer) const {
    nn::export_store(encoder_.params(), "sim/encoder/", out, with_optimizer);
    nn::export_store(head_.params(), "sim/head/", out, with_optimizer);
    nn::Matrix shape(1, 4);
    shape << cfg_.obs_dim, cfg_.embed_dim, cfg_.encoder_hidden, cfg_.head_hidden;
    out.push_back({"sim/@config", shape});
  }

  static SimilarityModel import_from(const std::vector<nn::NamedTensor>& tensors) {
    const nn::NamedTensor* cfg_t = nullptr;
    for (const auto& t : tensors)
      if (t.name == "sim/@config") cfg_t = &t;
    if (!cfg_t || cfg_t->value.size() != 4) throw ConfigError("checkpoint is not a similarity model");
    SimilarityConfig cfg;
    cfg.obs_dim = static_cast<int>(cfg_t->value(0, 0));
    cfg.embed_dim = static_cast<int>(cfg_t->value(0, 1));
    cfg.encoder_hidden = static_cast<int>(cfg_t->value(0, 2));
    cfg.head_hidden = static_cast<int>(cfg_t->value(0, 3));
    SimilarityModel m(cfg);
    nn::import_store(m.encoder_.params(), "sim/encoder/", tensors);
    nn::import_store(m.head_.params(), "sim/head/", tensors);
    return m;
  }

 private:
  SimilarityConfig cfg_;
  nn::Mlp encoder_;
  nn::Mlp head_;
};

struct TrainSimConfig {
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  int n_pairs = 8000;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
  HorizonConfig horizon;
};

struct TrainSimReport {
  std::vector<double> epoch_loss;
  std::vector<double> heldout_accuracy;
  int train_pairs = 0;
  int heldout_pairs = 0;

  double final_accuracy() const { return heldout_accuracy.empty() ? 0.0 : heldout_accuracy.back(); }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline nn::Matrix gather_obs(const maze::ExplorationDB& db, const std::vector<PairSample>& pairs,
                             std::size_t begin, std::size_t end, bool first) {
  nn::Matrix m(db.feature_size(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = pairs[i];
    m.col(static_cast<Eigen::Index>(i - begin)) = db.records[first ? p.a : p.b].features;
  }
  return m;
}

}  // namespace detail

/// Deterministic split of the pair set: the same (db, seed) always yields the
/// same train/held-out pairs.
inline std::pair<std::vector<PairSample>, std::vector<PairSample>> split_pairs(const maze::ExplorationDB& db,
                                                                                 const TrainSimConfig& cfg) {
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x70a1));
  auto pairs = sample_pairs(db, cfg.n_pairs, rng, cfg.horizon);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto n_hold = static_cast<std::size_t>(std::round(cfg.holdout_fraction * static_cast<double>(pairs.size())));
  std::vector<PairSample> held(pairs.end() - static_cast<std::ptrdiff_t>(n_hold), pairs.end());
  pairs.resize(pairs.size() - n_hold);
  return {std::move(pairs), std::move(held)};
}

inline double heldout_accuracy(SimilarityModel& model, const maze::ExplorationDB& db,
                               const std::vector<PairSample>& held) {
  if (held.empty()) return 0.0;
  std::vector<int> labels;
  for (const auto& p : held) labels.push_back(p.label);
  auto [loss, correct] = model.batch_loss(detail::gather_obs(db, held, 0, held.size(), true),
                                          detail::gather_obs(db, held, 0, held.size(), false), labels, false);
  return static_cast<double>(correct) / static_cast<double>(held.size());
}

/// Adam on the mean cross-entropy over minibatches. Epoch e shuffles with a
/// seed derived from (seed, e), so training resumed at `first_epoch` from a
/// checkpoint that includes optimizer state continues bit-exactly.
inline TrainSimReport train_similarity(SimilarityModel& model, const maze::ExplorationDB& db,
                                       const TrainSimConfig& cfg, int first_epoch = 0) {
  if (db.size() == 0) throw PreconditionError("train_similarity: empty exploration db");
  if (db.feature_size() != model.config().obs_dim)
    throw DimensionError("train_similarity: observation size does not match the model");
  if (cfg.batch < 1 || cfg.epochs < 0) throw ConfigError("train_similarity: bad batch/epochs");
  auto [train, held] = split_pairs(db, cfg);
  TrainSimReport rep;
  rep.train_pairs = static_cast<int>(train.size());
  rep.heldout_pairs = static_cast<int>(held.size());

  const std::int64_t first_step = model.encoder().params().step_count();
  std::int64_t step = 0;
  for (int e = first_epoch; e < cfg.epochs; ++e) {
    std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(e)));
    std::vector<PairSample> order = train;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      std::vector<int> labels;
      for (std::size_t i = b; i < end; ++i) labels.push_back(order[i].label);
      model.encoder().params().zero_grad();
      model.head().params().zero_grad();
      auto [loss, correct] = model.batch_loss(detail::gather_obs(db, order, b, end, true),
                                              detail::gather_obs(db, order, b, end, false), labels, true);
      ++step;
      if (!std::isfinite(loss))
        throw NumericalError("train_similarity diverged (seed " + std::to_string(cfg.seed) + ", epoch " +
                             std::to_string(e) + ", step " + std::to_string(first_step + step) + ")");
      nn::adam_step(model.encoder().params(), cfg.lr);
      nn::adam_step(model.head().params(), cfg.lr);
      loss_sum += loss * static_cast<double>(end - b);
      seen += end - b;
    }
    rep.epoch_loss.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
    rep.heldout_accuracy.push_back(heldout_accuracy(model, db, held));
  }
  return rep;
}

/// Connection probabilities phi(o_i, o_k) for every record k.
inline nn::Vector connection_probs(const SimilarityModel& model, const RowMatrix& embeddings, std::size_t i) {
  if (i >= static_cast<std::size_t>(embeddings.rows())) throw PreconditionError("connection_probs: index out of range");
  return model.prob_against(embeddings.row(static_cast<Eigen::Index>(i)).transpose(), embeddings);
}

/// Embeds every record of the database.
inline RowMatrix embed_db(const SimilarityModel& model, const maze::ExplorationDB& db) {
  nn::Matrix obs(db.feature_size(), static_cast<Eigen::Index>(db.size()));
  for (std::size_t i = 0; i < db.size(); ++i) obs.col(static_cast<Eigen::Index>(i)) = db.records[i].features;
  return model.embed(obs);
}

}  // namespace gam::memory
