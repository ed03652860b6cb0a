#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gam/agent/a2c.hpp"
#include "gam/nn/checkpoint.hpp"
#include "gam/nn/lstm.hpp"
#include "gam/nn/mlp.hpp"

namespace gam::agent {

/// Rows 0..6 of a network output are action logits, row 7 the value.
inline constexpr int kOutputRows = maze::kNumActions + 1;

/// Per-step tapes of a forward pass over a rollout.
struct SeqTape {
  std::vector<nn::MlpTape> head;
  std::vector<nn::LstmStepTape> cell;
  int steps = 0;
  int batch = 0;
};

/// Actor-critic network. Feed-forward variants: MLP in -> h -> h -> 8 (relu).
/// LSTM variant: LSTM(in, h) followed by MLP h -> h -> 8.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(Variant v, int input_dim, int hidden = 128) : variant_(v), input_dim_(input_dim), hidden_(hidden) {
    if (input_dim < 1 || hidden < 1) throw ConfigError("policy: sizes must be >= 1");
    if (recurrent()) {
      cell_ = nn::Lstm(input_dim, hidden, "");
      head_ = nn::Mlp({{hidden, hidden, kOutputRows}});
    } else {
      head_ = nn::Mlp({{input_dim, hidden, hidden, kOutputRows}});
    }
  }

  Variant variant() const { return variant_; }
  bool recurrent() const { return variant_ == Variant::kLstm; }
  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }

  std::vector<nn::ParamStore*> param_stores() {
    std::vector<nn::ParamStore*> out{&head_.params()};
    if (recurrent()) out.push_back(&cell_.params());
    return out;
  }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    for (auto* s : param_stores()) s->init_glorot(rng);
    // Small policy weights keep the initial policy close to uniform.
    auto& p = head_.params();
    p.value(p.size() - 2).topRows(maze::kNumActions) *= 0.01;
  }

  nn::LstmState zero_state(int batch) const { return nn::LstmState::zeros(recurrent() ? hidden_ : 1, batch); }

  /// One step for a batch of states (input_dim x B). Advances `state` for the
  /// LSTM variant; ignored otherwise.
  nn::Matrix act(const nn::Matrix& s, nn::LstmState& state) const {
    if (!recurrent()) return head_.forward(s).output;
    state = cell_.step(s, state);
    return head_.forward(state.hidden).output;
  }

  /// Forward over a rollout: inputs[t] is (input_dim x B). reset[t][b] != 0
  /// zeroes column b of the recurrent state before step t. Returns the
  /// outputs (8 x T*B), step-major: column t*B + b.
  nn::Matrix forward_seq(const std::vector<nn::Matrix>& inputs, const nn::LstmState& init,
                         const std::vector<std::vector<std::uint8_t>>& reset, SeqTape* tape) const {
    const int t_len = static_cast<int>(inputs.size());
    if (t_len == 0) throw PreconditionError("policy: empty rollout");
    const auto b = inputs.front().cols();
    nn::Matrix out(kOutputRows, t_len * b);
    if (tape) {
      tape->head.clear();
      tape->cell.clear();
      tape->steps = t_len;
      tape->batch = static_cast<int>(b);
    }
    if (!recurrent()) {
      nn::Matrix all(input_dim_, t_len * b);
      for (int t = 0; t < t_len; ++t) all.middleCols(t * b, b) = inputs[static_cast<std::size_t>(t)];
      auto r = head_.forward(all);
      if (tape) tape->head.push_back(std::move(r.tape));
      return r.output;
    }
    nn::LstmState st = init;
    for (int t = 0; t < t_len; ++t) {
      apply_reset(st, reset, t);
      nn::LstmStepTape ct;
      st = cell_.step(inputs[static_cast<std::size_t>(t)], st, tape ? &ct : nullptr);
      auto r = head_.forward(st.hidden);
      out.middleCols(t * b, b) = r.output;
      if (tape) {
        tape->cell.push_back(std::move(ct));
        tape->head.push_back(std::move(r.tape));
      }
    }
    return out;
  }

  /// Accumulates parameter gradients for d(loss)/d(outputs) and returns
  /// d(loss)/d(inputs) (input_dim x T*B, same column order). Gradient into
  /// the initial state is dropped (truncated BPTT).
  nn::Matrix backward_seq(const SeqTape& tape, const nn::Matrix& d_out,
                          const std::vector<std::vector<std::uint8_t>>& reset) {
    const int t_len = tape.steps;
    const auto b = static_cast<Eigen::Index>(tape.batch);
    if (d_out.rows() != kOutputRows || d_out.cols() != t_len * b) throw DimensionError("policy: output gradient shape");
    if (!recurrent()) return head_.backward(tape.head.front(), d_out);
    nn::Matrix d_in(input_dim_, t_len * b);
    nn::Matrix dh = nn::Matrix::Zero(hidden_, b), dc = nn::Matrix::Zero(hidden_, b);
    for (int t = t_len - 1; t >= 0; --t) {
      const auto ts = static_cast<std::size_t>(t);
      dh += head_.backward(tape.head[ts], d_out.middleCols(t * b, b));
      auto [dx, dprev] = cell_.backward_step(tape.cell[ts], dh, dc);
      d_in.middleCols(t * b, b) = dx;
      dh = std::move(dprev.hidden);
      dc = std::move(dprev.cell);
      if (ts < reset.size())
        for (Eigen::Index c = 0; c < b; ++c)
          if (reset[ts][static_cast<std::size_t>(c)]) {
            dh.col(c).setZero();
            dc.col(c).setZero();
          }
    }
    return d_in;
  }

  void export_to(std::vector<nn::NamedTensor>& out, bool with_optimizer) const {
    nn::Matrix meta(3, 1);
    meta << static_cast<double>(variant_), input_dim_, hidden_;
    out.push_back({"policy/meta", meta});
    nn::export_store(head_.params(), "policy/head/", out, with_optimizer);
    if (recurrent()) nn::export_store(cell_.params(), "policy/lstm/", out, with_optimizer);
  }

  static PolicyNet import_from(const std::vector<nn::NamedTensor>& tensors) {
    const nn::NamedTensor* meta = nullptr;
    for (const auto& t : tensors)
      if (t.name == "policy/meta") meta = &t;
    if (!meta || meta->value.size() != 3) throw ConfigError("checkpoint lacks policy/meta");
    const int v = static_cast<int>(meta->value(0, 0));
    if (v < 0 || v > static_cast<int>(Variant::kLstm)) throw ConfigError("checkpoint has an unknown variant");
    PolicyNet net(static_cast<Variant>(v), static_cast<int>(meta->value(1, 0)), static_cast<int>(meta->value(2, 0)));
    nn::import_store(net.head_.params(), "policy/head/", tensors);
    if (net.recurrent()) nn::import_store(net.cell_.params(), "policy/lstm/", tensors);
    return net;
  }

 private:
  static void apply_reset(nn::LstmState& st, const std::vector<std::vector<std::uint8_t>>& reset, int t) {
    const auto ts = static_cast<std::size_t>(t);
    if (ts >= reset.size()) return;
    for (std::size_t c = 0; c < reset[ts].size(); ++c)
      if (reset[ts][c]) {
        st.hidden.col(static_cast<Eigen::Index>(c)).setZero();
        st.cell.col(static_cast<Eigen::Index>(c)).setZero();
      }
  }

  Variant variant_ = Variant::kFf;
  int input_dim_ = 0;
  int hidden_ = 0;
  nn::Mlp head_;
  nn::Lstm cell_;
};

}  // namespace gam::agent
