#pragma once

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <random>
#include <vector>

#include "gam/error.hpp"
#include "gam/maze/explore.hpp"

namespace gam::memory {

/// Temporal horizon that defines "connected" observation pairs.
struct HorizonConfig {
  int t_min = 5;
  int t_max = 20;
  // Share of negatives drawn from the trivial zone 0 < k-t < t_min.
  double sub_min_fraction = 0.1;
};

/// 1 iff both samples come from the same trajectory and t_min <= |k-t| <= t_max.
inline int horizon_label(int traj_a, int t_a, int traj_b, int t_b, const HorizonConfig& h) {
  if (traj_a != traj_b) return 0;
  const int d = t_b > t_a ? t_b - t_a : t_a - t_b;
  return (d >= h.t_min && d <= h.t_max) ? 1 : 0;
}

/// Indices into ExplorationDB::records.
struct PairSample {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;
};

namespace detail {

// Picks (trajectory, gap, start) uniformly over all ordered pairs whose gap
// lies in [lo, hi] within one trajectory; empty() when there are none.
class GapSampler {
 public:
  GapSampler(const std::vector<std::pair<std::size_t, std::size_t>>& ranges, int lo, int hi)
      : ranges_(ranges), lo_(lo), hi_(hi) {
    std::vector<double> w;
    for (const auto& [b, e] : ranges) {
      const auto len = static_cast<long long>(e - b);
      w.push_back(count(len));
      std::vector<double> gw;
      for (long long g = lo_; g <= std::min<long long>(hi_, len - 1); ++g) gw.push_back(static_cast<double>(len - g));
      if (gw.empty()) gw.push_back(0.0);
      gaps_.emplace_back(gw.begin(), gw.end());
    }
    total_ = 0;
    for (double x : w) total_ += x;
    if (total_ > 0) traj_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }
  bool empty() const { return total_ <= 0; }

  template <class Urbg>
  std::pair<std::size_t, std::size_t> operator()(Urbg& rng) {
    const std::size_t ti = traj_(rng);
    const auto [b, e] = ranges_[ti];
    const long long len = static_cast<long long>(e - b);
    const long long gap = lo_ + gaps_[ti](rng);
    std::uniform_int_distribution<long long> start(0, len - gap - 1);
    const long long s = start(rng);
    return {b + static_cast<std::size_t>(s), b + static_cast<std::size_t>(s + gap)};
  }

 private:
  double count(long long len) const {
    double c = 0;
    for (long long g = lo_; g <= std::min<long long>(hi_, len - 1); ++g) c += static_cast<double>(len - g);
    return c;
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  int lo_;
  int hi_;
  double total_ = 0;
  std::discrete_distribution<std::size_t> traj_;
  std::vector<std::discrete_distribution<long long>> gaps_;
};

}  // namespace detail

/// Draws n pairs, half positive. Positives are uniform over within-trajectory
/// pairs with t_min <= k-t <= t_max. Negatives: a `sub_min_fraction` share
/// from the trivial zone below t_min, the rest split evenly between
/// within-trajectory pairs beyond t_max and cross-trajectory pairs (falling
/// back to whichever kind exists). Labels always come from horizon_label.
template <class Urbg>
std::vector<PairSample> sample_pairs(const maze::ExplorationDB& db, int n, Urbg& rng, const HorizonConfig& h = {}) {
  if (n < 2) throw PreconditionError("sample_pairs: need n >= 2");
  const auto ranges = db.trajectory_ranges();
  detail::GapSampler pos(ranges, h.t_min, h.t_max);
  if (pos.empty()) throw PreconditionError("sample_pairs: every trajectory is too short for a positive pair");
  detail::GapSampler far(ranges, h.t_max + 1, 1 << 30);
  detail::GapSampler near(ranges, 1, h.t_min - 1);
  const bool cross_ok = ranges.size() > 1;
  if (far.empty() && !cross_ok) throw PreconditionError("sample_pairs: no negative pairs available");

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, db.size() - 1);
  auto label_of = [&](std::size_t a, std::size_t b) {
    const auto& ra = db.records[a];
    const auto& rb = db.records[b];
    return horizon_label(ra.traj_id, ra.t, rb.traj_id, rb.t, h);
  };

  std::vector<PairSample> out;
  out.reserve(static_cast<std::size_t>(n));
  const int n_pos = n / 2;
  for (int i = 0; i < n_pos; ++i) {
    auto [a, b] = pos(rng);
    out.push_back({a, b, label_of(a, b)});
  }
  for (int i = n_pos; i < n; ++i) {
    std::size_t a = 0;
    std::size_t b = 0;
    const double r = u01(rng);
    if (!near.empty() && r < h.sub_min_fraction) {
      std::tie(a, b) = near(rng);
    } else {
      const bool use_cross = cross_ok && (far.empty() || u01(rng) < 0.5);
      if (use_cross) {
        a = any(rng);
        const int ta = db.records[a].traj_id;
        do { b = any(rng); } while (db.records[b].traj_id == ta);
      } else {
        std::tie(a, b) = far(rng);
      }
    }
    out.push_back({a, b, label_of(a, b)});
  }
  return out;
}

}  // namespace gam::memory
