#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mixedml/model.hpp"

namespace mixedml {

// Time mesh on [0, T]. Uniform meshes are what the planner generates; any
// strictly increasing point set starting at 0 is accepted.
class Mesh {
 public:
  Mesh() = default;
  explicit Mesh(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2 || points_.front() != 0.0)
      throw std::invalid_argument("mesh must start at 0 and contain at least two points");
    for (std::size_t k = 1; k < points_.size(); ++k)
      if (!(points_[k] > points_[k - 1])) throw std::invalid_argument("mesh points must increase strictly");
  }

  static Mesh uniform(double final_time, std::size_t intervals) {
    if (intervals == 0) throw std::invalid_argument("mesh needs at least one interval");
    std::vector<double> pts(intervals + 1);
    for (std::size_t k = 0; k <= intervals; ++k)
      pts[k] = k == intervals ? final_time : final_time * static_cast<double>(k) / static_cast<double>(intervals);
    return Mesh(std::move(pts));
  }

  // Uniform mesh whose spacing is dt rounded so that it divides T.
  static Mesh with_spacing(double final_time, double dt) {
    const double n = std::max(1.0, std::round(final_time / dt));
    return uniform(final_time, static_cast<std::size_t>(n));
  }

  double final_time() const { return points_.back(); }
  std::size_t intervals() const { return points_.size() - 1; }
  const std::vector<double>& points() const { return points_; }
  double max_spacing() const {
    double h = 0.0;
    for (std::size_t k = 1; k < points_.size(); ++k) h = std::max(h, points_[k] - points_[k - 1]);
    return h;
  }

  // Smallest mesh point strictly greater than t (T if t >= T).
  double next_after(double t) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), t);
    return it == points_.end() ? points_.back() : *it;
  }

  Mesh refined(std::size_t factor) const {
    std::vector<double> pts;
    pts.reserve(intervals() * factor + 1);
    for (std::size_t k = 0; k + 1 < points_.size(); ++k) {
      const double a = points_[k];
      const double b = points_[k + 1];
      for (std::size_t r = 0; r < factor; ++r)
        pts.push_back(r == 0 ? a : a + (b - a) * static_cast<double>(r) / static_cast<double>(factor));
    }
    pts.push_back(points_.back());
    return Mesh(std::move(pts));
  }

  // True if every point of `coarse` is a point of this mesh.
  bool nests(const Mesh& coarse) const {
    return std::all_of(coarse.points_.begin(), coarse.points_.end(), [&](double p) {
      return std::binary_search(points_.begin(), points_.end(), p);
    });
  }

 private:
  std::vector<double> points_{0.0, 1.0};
};

// Result of simulating one path. Counters are always kept; the per-epoch
// record (times, states, tau-leap masks) only when requested.
struct Path {
  State final_state;
  double final_time = 0.0;
  bool exited = false;
  double exit_time = std::numeric_limits<double>::quiet_NaN();

  std::int64_t n_tl = 0;      // successful tau-leap epochs
  std::int64_t n_exact = 0;   // exact firings (MNRM or SSA steps)
  std::int64_t n_epochs = 0;  // decision epochs
  std::int64_t n_splits = 0;  // split computations
  double poisson_work = 0.0;  // sum of C_P(lambda) over Poisson draws
  std::vector<std::int64_t> firings;  // per-channel firing counts

  bool recorded = false;
  std::vector<double> times;           // t_0 .. t_K
  std::vector<std::int64_t> states;    // (K+1) x d, row-major
  std::vector<std::uint8_t> tl_masks;  // K x J, 1 if channel was tau-leaped on [t_k, t_k+1)

  std::size_t num_points() const { return times.size(); }
  std::span<const std::int64_t> state_at(std::size_t k, std::size_t d) const {
    return std::span<const std::int64_t>(states).subspan(k * d, d);
  }
  std::span<const std::uint8_t> mask_at(std::size_t k, std::size_t J) const {
    return std::span<const std::uint8_t>(tl_masks).subspan(k * J, J);
  }

  void record_start(double t, const State& x) {
    recorded = true;
    times.assign(1, t);
    states.assign(x.begin(), x.end());
    tl_masks.clear();
  }
  void record_step(double t, const State& x, std::span<const std::uint8_t> mask) {
    times.push_back(t);
    states.insert(states.end(), x.begin(), x.end());
    tl_masks.insert(tl_masks.end(), mask.begin(), mask.end());
  }
};

}  // namespace mixedml
