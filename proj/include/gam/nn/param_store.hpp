#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gam/error.hpp"

namespace gam::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// One named tensor (vector blocks are stored as rows x 1) plus its gradient
/// accumulator and two optimizer slots (Adam: m/v, RMSProp: mean-square in v).
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;
};

class ParamStore {
 public:
  ParamStore() = default;

  /// Appends a zero-initialised block and returns its index.
  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1)
      throw DimensionError("param block '" + name + "' must have positive shape");
    ParamBlock b;
    b.name = std::move(name);
    b.value = Matrix::Zero(rows, cols);
    b.grad = Matrix::Zero(rows, cols);
    b.m = Matrix::Zero(rows, cols);
    b.v = Matrix::Zero(rows, cols);
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size()) - 1;
  }

  int size() const { return static_cast<int>(blocks_.size()); }
  ParamBlock& block(int i) { return blocks_.at(static_cast<std::size_t>(i)); }
  const ParamBlock& block(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }
  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (blocks_[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
  }

  Matrix& value(int i) { return block(i).value; }
  const Matrix& value(int i) const { return block(i).value; }
  Matrix& grad(int i) { return block(i).grad; }

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  void bump_step() { ++step_; }

  void zero_grad() {
    for (auto& b : blocks_) b.grad.setZero();
  }

  /// Total number of scalar parameters across all blocks.
  std::size_t coordinate_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
    return n;
  }

  // Flat coordinate access, used by the finite-difference checker.
  double& coord(std::size_t k) { return locate(k, &ParamBlock::value); }
  double grad_coord(std::size_t k) { return locate(k, &ParamBlock::grad); }

  bool values_finite() const {
    for (const auto& b : blocks_)
      if (!b.value.allFinite()) return false;
    return true;
  }
  bool grads_finite() const {
    for (const auto& b : blocks_)
      if (!b.grad.allFinite()) return false;
    return true;
  }

  double grad_squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.grad.squaredNorm();
    return s;
  }
  void scale_grads(double f) {
    for (auto& b : blocks_) b.grad *= f;
  }

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); column blocks
  /// (biases) are zeroed.
  void init_glorot(Rng& rng) {
    for (auto& b : blocks_) {
      if (b.value.cols() == 1) {
        b.value.setZero();
        continue;
      }
      const double fan_out = static_cast<double>(b.value.rows());
      const double fan_in = static_cast<double>(b.value.cols());
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (Eigen::Index i = 0; i < b.value.size(); ++i) b.value.data()[i] = u(rng);
    }
  }

 private:
  double& locate(std::size_t k, Matrix ParamBlock::*field) {
    for (auto& b : blocks_) {
      const auto n = static_cast<std::size_t>(b.value.size());
      if (k < n) return (b.*field).data()[k];
      k -= n;
    }
    throw PreconditionError("parameter coordinate out of range");
  }

  std::vector<ParamBlock> blocks_;
  std::int64_t step_ = 0;
};

}  // namespace gam::nn
