#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mixedml/ledger.hpp"
#include "mixedml/model.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"

namespace mixedml {

// Internal clocks of the modified next reaction method: R_j is the integrated
// propensity of channel j since its clock was (re)initialized, P_j the internal
// time of its next firing.
struct MnrmClocks {
  std::vector<double> R;
  std::vector<double> P;

  MnrmClocks() = default;
  explicit MnrmClocks(std::size_t J) : R(J, 0.0), P(J, 0.0) {}
};

// One stream per reaction channel, so each channel's randomness is replayable
// on its own.
class ChannelStreams {
 public:
  ChannelStreams() = default;
  ChannelStreams(const StreamKey& base, std::size_t J, std::uint32_t first_substream = 1) {
    streams_.reserve(J);
    for (std::size_t j = 0; j < J; ++j)
      streams_.emplace_back(base.with_substream(first_substream + static_cast<std::uint32_t>(j)));
  }
  Stream& operator[](std::size_t j) { return streams_[j]; }
  std::size_t size() const { return streams_.size(); }

 private:
  std::vector<Stream> streams_;
};

// R_j <- 0, P_j <- -log(u) for every channel flagged in `subset`.
inline void reinit_clocks(MnrmClocks& clocks, std::span<const std::uint8_t> subset, ChannelStreams& streams) {
  for (std::size_t j = 0; j < subset.size(); ++j) {
    if (!subset[j]) continue;
    clocks.R[j] = 0.0;
    clocks.P[j] = streams[j].unit_exponential();
  }
}

struct MnrmStats {
  std::int64_t firings = 0;
};

// Fires channels flagged in `active` at their current propensities until the
// next firing would pass `horizon`; returns the time reached (always
// `horizon`). Draws that would cross the horizon stay in the clocks.
inline double mnrm_advance(const ReactionNetwork& net, State& x, double t, double horizon,
                           std::span<const std::uint8_t> active, MnrmClocks& clocks, ChannelStreams& streams,
                           MnrmStats* stats = nullptr, CvLedger* ledger = nullptr,
                           std::vector<std::int64_t>* firings = nullptr) {
  const std::size_t J = net.num_reactions();
  std::vector<double> a(J, 0.0);
  auto refresh = [&] {
    for (std::size_t j = 0; j < J; ++j) a[j] = active[j] ? net.propensity(j, x) : 0.0;
  };
  refresh();
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t mu = J;
    for (std::size_t j = 0; j < J; ++j) {
      if (!active[j] || a[j] <= 0.0) continue;
      const double dt = (clocks.P[j] - clocks.R[j]) / a[j];
      if (dt < best) {
        best = dt;
        mu = j;
      }
    }
    if (mu == J || t + best > horizon) {
      const double span = horizon - t;
      for (std::size_t j = 0; j < J; ++j) {
        if (!active[j]) continue;
        clocks.R[j] += a[j] * span;
        if (ledger) ledger->drift(j, a[j] * span);
      }
      return horizon;
    }
    for (std::size_t j = 0; j < J; ++j) {
      if (!active[j]) continue;
      if (j == mu) {
        if (ledger) ledger->drift(j, clocks.P[j] - clocks.R[j]);
        clocks.R[j] = clocks.P[j];
      } else {
        clocks.R[j] += a[j] * best;
        if (ledger) ledger->drift(j, a[j] * best);
      }
    }
    const auto& nu = net.nu(mu);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += nu[i];
    if (ledger) ledger->jump(mu);
    if (firings) (*firings)[mu] += 1;
    if (stats) stats->firings += 1;
    clocks.P[mu] += streams[mu].unit_exponential();
    t += best;
    refresh();
  }
}

struct SimulationOptions {
  bool record = false;
};

// Gillespie's direct method. Benchmark baseline.
inline Path ssa_path(const ReactionNetwork& net, const State& x0, double final_time, Stream& stream,
                     SimulationOptions opts = {}) {
  const std::size_t J = net.num_reactions();
  Path path;
  path.firings.assign(J, 0);
  State x = x0;
  double t = 0.0;
  std::vector<std::uint8_t> mask(J, 0);
  if (opts.record) path.record_start(t, x);
  std::vector<double> a(J);
  while (true) {
    net.propensities(x, a);
    double a0 = 0.0;
    for (double v : a) a0 += v;
    if (a0 <= 0.0) break;
    const double dt = -std::log(stream.uniform()) / a0;
    if (t + dt > final_time) break;
    t += dt;
    const double target = stream.uniform() * a0;
    double acc = 0.0;
    std::size_t mu = J - 1;
    for (std::size_t j = 0; j < J; ++j) {
      acc += a[j];
      if (target < acc && a[j] > 0.0) {
        mu = j;
        break;
      }
    }
    while (a[mu] <= 0.0 && mu > 0) --mu;  // guards round-off at the top of the cumulative sum
    const auto& nu = net.nu(mu);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += nu[i];
    path.firings[mu] += 1;
    path.n_exact += 1;
    if (opts.record) path.record_step(t, x, mask);
  }
  if (opts.record) path.record_step(final_time, x, mask);
  path.final_state = std::move(x);
  path.final_time = final_time;
  return path;
}

// Exact path by the modified next reaction method over all channels.
inline Path mnrm_path(const ReactionNetwork& net, const State& x0, double final_time, ChannelStreams& streams,
                      CvLedger* ledger = nullptr) {
  const std::size_t J = net.num_reactions();
  Path path;
  path.firings.assign(J, 0);
  State x = x0;
  MnrmClocks clocks(J);
  std::vector<std::uint8_t> all(J, 1);
  reinit_clocks(clocks, all, streams);
  MnrmStats stats;
  mnrm_advance(net, x, 0.0, final_time, all, clocks, streams, &stats, ledger, &path.firings);
  path.n_exact = stats.firings;
  path.final_state = std::move(x);
  path.final_time = final_time;
  return path;
}

}  // namespace mixedml
