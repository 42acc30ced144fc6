#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mixedml/exact.hpp"
#include "mixedml/ledger.hpp"
#include "mixedml/model.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"
#include "mixedml/splitting.hpp"
#include "mixedml/tauleap.hpp"

namespace mixedml {

// Overrides the adaptive split. `tau_leap_fixed` tau-leaps every channel with
// one step per mesh interval and no Chernoff control (plain Euler tau-leap).
enum class ForcedMethod { none, exact, tau_leap_fixed };

struct MixedConfig {
  double delta = 1e-3;
  CostModel cost;
  SplitOptions split;
  ForcedMethod force = ForcedMethod::none;
  bool record = false;
};

// Substream layout of a path's StreamKey.
namespace substreams {
constexpr std::uint32_t control = 0;
constexpr std::uint32_t channels = 1;  // channel j uses channels + j
constexpr std::uint32_t bridge = 1u << 20;
}  // namespace substreams

// One mixed exact/tau-leap path on `mesh`. Every mesh point is a decision
// point. Tau-leap increments use propensities frozen at the start of the
// epoch and are applied at its end, after the exact channels have evolved.
inline Path simulate_mixed_path(const ReactionNetwork& net, const State& x0, const Mesh& mesh,
                                const MixedConfig& cfg, const StreamKey& key, CvLedger* ledger = nullptr) {
  const std::size_t J = net.num_reactions();
  const double T = mesh.final_time();
  Stream control(key.with_substream(substreams::control));
  ChannelStreams streams(key, J, substreams::channels);

  Path path;
  path.firings.assign(J, 0);
  State x = x0;
  double t = 0.0;
  int kappa = -1;
  MnrmClocks clocks(J);
  std::vector<std::uint8_t> clock_live(J, 0);
  std::vector<double> a(J);
  if (cfg.record) path.record_start(t, x);

  while (t < T) {
    const double next_grid = mesh.next_after(t);
    const double gap = next_grid - t;
    net.propensities(x, a);
    double a0 = 0.0;
    for (double v : a) a0 += v;
    if (!(a0 > 0.0)) {
      // absorbing state: nothing can fire again
      t = T;
      path.n_epochs += 1;
      if (cfg.record) path.record_step(t, x, std::vector<std::uint8_t>(J, 0));
      break;
    }

    Split split;
    switch (cfg.force) {
      case ForcedMethod::exact:
        split.tl.assign(J, 0);
        split.tau = gap;
        break;
      case ForcedMethod::tau_leap_fixed:
        split.tl.assign(J, 1);
        split.tau = gap;
        break;
      case ForcedMethod::none:
        split = one_step_mixing_rule(net, x, a, t, cfg.delta, next_grid, kappa, cfg.cost, cfg.split, control);
        if (split.computed) path.n_splits += 1;
        break;
    }

    bool leap = !split.tl_empty();
    double H = next_grid;
    if (leap) {
      if (split.tau < gap) H = std::min(t + split.tau, next_grid);
      if (!(H > t)) leap = false;
    }
    if (!leap) {
      split.tl.assign(J, 0);
      H = std::min(t + control.exponential(a0), next_grid);
    }
    const double tau = H - t;

    TauLeapIncrement inc;
    if (leap) {
      inc = tau_leap_update(net, x, a, split.tl, tau, [&](std::size_t j) -> Stream& { return streams[j]; });
      for (std::size_t j = 0; j < J; ++j)
        if (split.tl[j] && a[j] > 0.0) path.poisson_work += cfg.cost.poisson_cost(a[j] * tau);
    }

    const auto exact = split.exact_mask();
    bool any_exact = false;
    for (std::size_t j = 0; j < J; ++j) {
      if (!exact[j]) {
        clock_live[j] = 0;
        continue;
      }
      any_exact = true;
      if (!clock_live[j]) {
        clocks.R[j] = 0.0;
        clocks.P[j] = streams[j].unit_exponential();
        clock_live[j] = 1;
      }
    }
    if (any_exact) {
      MnrmStats stats;
      mnrm_advance(net, x, t, H, exact, clocks, streams, &stats, ledger, &path.firings);
      path.n_exact += stats.firings;
    }
    t = H;

    if (leap) {
      if (ledger)
        for (std::size_t j = 0; j < J; ++j)
          if (split.tl[j]) ledger->advance(j, a[j] * tau, inc.counts[j]);
      bool out = false;
      for (std::size_t i = 0; i < x.size(); ++i) out = out || x[i] + inc.dx[i] < 0;
      if (out) {
        path.exited = true;
        path.exit_time = t;
        path.n_epochs += 1;
        break;
      }
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += inc.dx[i];
      for (std::size_t j = 0; j < J; ++j) path.firings[j] += inc.counts[j];
      path.n_tl += 1;
    }
    path.n_epochs += 1;
    if (cfg.record) path.record_step(t, x, split.tl);
  }

  path.final_state = std::move(x);
  path.final_time = path.exited ? path.exit_time : T;
  return path;
}

}  // namespace mixedml
