#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mixedml/mixedpath.hpp"
#include "mixedml/model.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"
#include "mixedml/splitting.hpp"
#include "mixedml/tauleap.hpp"

namespace mixedml {

// Which coupling kernel drives a channel over the current interval.
//   b1: tau-leap at both levels          b2: coarse tau-leap, fine exact
//   b3: coarse exact, fine tau-leap      b4: exact at both levels
enum class Block : std::uint8_t { none = 0, b1 = 1, b2 = 2, b3 = 3, b4 = 4 };

struct BlockPartition {
  std::vector<Block> block;

  static BlockPartition from(std::span<const std::uint8_t> coarse_tl, std::span<const std::uint8_t> fine_tl) {
    BlockPartition p;
    p.block.resize(coarse_tl.size());
    for (std::size_t j = 0; j < coarse_tl.size(); ++j) {
      if (coarse_tl[j]) p.block[j] = fine_tl[j] ? Block::b1 : Block::b2;
      else p.block[j] = fine_tl[j] ? Block::b3 : Block::b4;
    }
    return p;
  }
  std::vector<std::uint8_t> mask(Block b) const {
    std::vector<std::uint8_t> m(block.size());
    for (std::size_t j = 0; j < block.size(); ++j) m[j] = block[j] == b ? 1 : 0;
    return m;
  }
};

// Stream rates of a coupled channel: A1 = min(coarse, fine) drives both
// levels, A2 = coarse - A1 the coarse level only, A3 = fine - A1 the fine
// level only.
inline std::array<double, 3> split_rates(double coarse_rate, double fine_rate) {
  const double common = std::min(coarse_rate, fine_rate);
  return {common, coarse_rate - common, fine_rate - common};
}

// Next decision of one level: horizon, split and the propensities frozen at
// the decision state.
struct Horizon {
  double H = 0.0;
  std::vector<std::uint8_t> tl;
  std::vector<double> frozen;
  double tau = 0.0;
  bool split_computed = false;
};

inline Horizon next_time_horizon(const ReactionNetwork& net, std::span<const std::int64_t> x, double t,
                                 double next_grid, double final_time, const MixedConfig& cfg, int& kappa,
                                 Stream& control) {
  const std::size_t J = net.num_reactions();
  Horizon h;
  h.frozen.resize(J);
  net.propensities(x, h.frozen);
  double a0 = 0.0;
  for (double v : h.frozen) a0 += v;
  next_grid = std::min(next_grid, final_time);
  const double gap = next_grid - t;
  h.tl.assign(J, 0);
  h.tau = gap;
  if (!(a0 > 0.0)) {
    h.H = next_grid;
    return h;
  }
  switch (cfg.force) {
    case ForcedMethod::exact:
      break;
    case ForcedMethod::tau_leap_fixed:
      h.tl.assign(J, 1);
      break;
    case ForcedMethod::none: {
      Split s = one_step_mixing_rule(net, x, h.frozen, t, cfg.delta, next_grid, kappa, cfg.cost, cfg.split, control);
      h.split_computed = s.computed;
      h.tl = std::move(s.tl);
      h.tau = s.tau;
      break;
    }
  }
  bool leap = std::any_of(h.tl.begin(), h.tl.end(), [](std::uint8_t v) { return v != 0; });
  h.H = next_grid;
  if (leap) {
    if (h.tau < gap) h.H = std::min(t + h.tau, next_grid);
    if (!(h.H > t)) leap = false;
  }
  if (!leap) {
    h.tl.assign(J, 0);
    h.H = std::min(t + control.exponential(a0), next_grid);
  }
  h.tau = h.H - t;
  return h;
}

// Tau-leap increments of the channels that are tau-leaped at both levels over
// [t, H], sub-stepped at the smaller of the two Chernoff steps recomputed from
// the intermediate states. Each sub-step draws Pois(A_i * dt) for the three
// rate streams; coarse gets streams 1 and 2, fine gets streams 1 and 3.
struct B1Result {
  std::vector<std::int64_t> coarse_dx;
  std::vector<std::int64_t> fine_dx;
  std::vector<std::int64_t> coarse_counts;
  std::vector<std::int64_t> fine_counts;
  double poisson_work = 0.0;
  int substeps = 0;
};

template <typename StreamPicker>
B1Result block_b1_update(const ReactionNetwork& net, std::span<const std::int64_t> coarse_state,
                         std::span<const std::int64_t> fine_state, std::span<const double> coarse_rates,
                         std::span<const double> fine_rates, std::span<const std::uint8_t> b1, double t, double H,
                         double coarse_delta, double fine_delta, const CostModel& cost, StreamPicker&& pick) {
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  B1Result r;
  r.coarse_dx.assign(d, 0);
  r.fine_dx.assign(d, 0);
  r.coarse_counts.assign(J, 0);
  r.fine_counts.assign(J, 0);
  if (!(H > t) || std::none_of(b1.begin(), b1.end(), [](std::uint8_t v) { return v != 0; })) return r;

  State xc(d), xf(d);
  const double min_step = 1e-3 * (H - t);
  double tr = t;
  while (tr < H) {
    bool valid = true;
    for (std::size_t i = 0; i < d; ++i) {
      xc[i] = coarse_state[i] + r.coarse_dx[i];
      xf[i] = fine_state[i] + r.fine_dx[i];
      valid = valid && xc[i] >= 0 && xf[i] >= 0;
    }
    double Hr = H;
    if (valid) {
      const double gap = H - tr;
      const double tc = chernoff_tau(net, ChernoffQuery{xc, coarse_rates, b1, coarse_delta, gap});
      const double tf = chernoff_tau(net, ChernoffQuery{xf, fine_rates, b1, fine_delta, gap});
      const double step = std::max(std::min(tc, tf), min_step);
      if (step < gap) Hr = std::min(H, tr + step);
    }
    const double dt = Hr - tr;
    for (std::size_t j = 0; j < J; ++j) {
      if (!b1[j]) continue;
      const auto A = split_rates(coarse_rates[j], fine_rates[j]);
      std::array<std::int64_t, 3> L{0, 0, 0};
      for (std::size_t i = 0; i < 3; ++i) {
        if (A[i] <= 0.0) continue;
        L[i] = pick(j, i).poisson(A[i] * dt);
        r.poisson_work += cost.poisson_cost(A[i] * dt);
      }
      const std::int64_t kc = L[0] + L[1];
      const std::int64_t kf = L[0] + L[2];
      r.coarse_counts[j] += kc;
      r.fine_counts[j] += kf;
      const auto& nu = net.nu(j);
      for (std::size_t i = 0; i < d; ++i) {
        r.coarse_dx[i] += kc * nu[i];
        r.fine_dx[i] += kf * nu[i];
      }
    }
    ++r.substeps;
    tr = Hr;
  }
  return r;
}

// Internal clocks of the three rate streams of every channel.
struct CoupledClocks {
  std::vector<std::array<double, 3>> R;
  std::vector<std::array<double, 3>> P;

  CoupledClocks() = default;
  explicit CoupledClocks(std::size_t J) : R(J, {0.0, 0.0, 0.0}), P(J, {0.0, 0.0, 0.0}) {}
};

struct CoupledEvent {
  double t = 0.0;
  bool fired = false;
  std::size_t channel = 0;
  std::size_t stream = 0;  // 0: both levels, 1: coarse only, 2: fine only
};

// One step of the coupled exact kernel: the stream whose internal clock hits
// its next firing first fires if that happens before `horizon`; otherwise all
// clocks advance to the horizon. Fired clocks draw a fresh unit exponential.
template <typename StreamPicker>
CoupledEvent coupled_exact_update(double t, double horizon, CoupledClocks& clocks,
                                  std::span<const std::array<double, 3>> rates, std::span<const std::uint8_t> active,
                                  StreamPicker&& pick) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t bj = 0;
  std::size_t bi = 0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!active[j]) continue;
    for (std::size_t i = 0; i < 3; ++i) {
      if (rates[j][i] <= 0.0) continue;
      const double dt = (clocks.P[j][i] - clocks.R[j][i]) / rates[j][i];
      if (dt < best) {
        best = dt;
        bj = j;
        bi = i;
      }
    }
  }
  CoupledEvent ev;
  if (!(t + best <= horizon)) {
    const double span = horizon - t;
    for (std::size_t j = 0; j < rates.size(); ++j)
      if (active[j])
        for (std::size_t i = 0; i < 3; ++i) clocks.R[j][i] += rates[j][i] * span;
    ev.t = horizon;
    return ev;
  }
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!active[j]) continue;
    for (std::size_t i = 0; i < 3; ++i) {
      if (j == bj && i == bi) clocks.R[j][i] = clocks.P[j][i];
      else clocks.R[j][i] += rates[j][i] * best;
    }
  }
  clocks.P[bj][bi] += pick(bj, bi).unit_exponential();
  ev.t = t + best;
  ev.fired = true;
  ev.channel = bj;
  ev.stream = bi;
  return ev;
}

struct CoupledPaths {
  Path coarse;
  Path fine;
};

namespace detail {

// One level of a coupled pair. `live` is the state seen by exact channels;
// tau-leap increments wait in `pending` until the level's horizon.
struct CoupledLeg {
  const Mesh* mesh = nullptr;
  MixedConfig cfg;
  State live;
  std::vector<std::int64_t> pending;
  std::vector<std::int64_t> pending_counts;
  Horizon horizon;
  int kappa = -1;
  bool exited = false;
  Path path;

  double rate(const ReactionNetwork& net, std::size_t j) const {
    return exited ? 0.0 : net.propensity(j, live);
  }
  bool tl(std::size_t j) const { return !exited && horizon.tl[j] != 0; }
};

inline void decide(const ReactionNetwork& net, CoupledLeg& leg, double t, double final_time, Stream& control) {
  leg.horizon = next_time_horizon(net, leg.live, t, leg.mesh->next_after(t), final_time, leg.cfg, leg.kappa, control);
  if (leg.horizon.split_computed) leg.path.n_splits += 1;
  std::fill(leg.pending.begin(), leg.pending.end(), 0);
  std::fill(leg.pending_counts.begin(), leg.pending_counts.end(), 0);
}

// Applies the pending tau-leap increments at the level's horizon.
inline void close_epoch(const ReactionNetwork& net, CoupledLeg& leg, double t) {
  const std::size_t J = net.num_reactions();
  const bool leaped = std::any_of(leg.horizon.tl.begin(), leg.horizon.tl.end(), [](std::uint8_t v) { return v != 0; });
  leg.path.n_epochs += 1;
  if (leaped) {
    bool out = false;
    for (std::size_t i = 0; i < leg.live.size(); ++i) out = out || leg.live[i] + leg.pending[i] < 0;
    if (out) {
      leg.exited = true;
      leg.path.exited = true;
      leg.path.exit_time = t;
      return;
    }
    for (std::size_t i = 0; i < leg.live.size(); ++i) leg.live[i] += leg.pending[i];
    for (std::size_t j = 0; j < J; ++j) leg.path.firings[j] += leg.pending_counts[j];
    leg.path.n_tl += 1;
  }
  if (leg.cfg.record) leg.path.record_step(t, leg.live, leg.horizon.tl);
}

}  // namespace detail

// Two mixed paths on nested meshes driven by shared randomness. Each leg has
// the law of simulate_mixed_path on its own mesh. If one leg exits the
// lattice the other continues alone to T.
inline CoupledPaths simulate_coupled_paths(const ReactionNetwork& net, const State& x0, const Mesh& coarse_mesh,
                                           const Mesh& fine_mesh, const MixedConfig& coarse_cfg,
                                           const MixedConfig& fine_cfg, const StreamKey& key) {
  const std::size_t J = net.num_reactions();
  const std::size_t d = net.num_species();
  const double T = fine_mesh.final_time();
  Stream coarse_control(key.with_substream(0));
  Stream fine_control(key.with_substream(1));
  std::vector<Stream> streams;
  streams.reserve(3 * J);
  for (std::size_t s = 0; s < 3 * J; ++s) streams.emplace_back(key.with_substream(2 + static_cast<std::uint32_t>(s)));
  auto pick = [&](std::size_t j, std::size_t i) -> Stream& { return streams[3 * j + i]; };

  detail::CoupledLeg coarse, fine;
  for (auto* leg : {&coarse, &fine}) {
    leg->live = x0;
    leg->pending.assign(d, 0);
    leg->pending_counts.assign(J, 0);
    leg->path.firings.assign(J, 0);
  }
  coarse.mesh = &coarse_mesh;
  fine.mesh = &fine_mesh;
  coarse.cfg = coarse_cfg;
  fine.cfg = fine_cfg;
  if (coarse.cfg.record) coarse.path.record_start(0.0, x0);
  if (fine.cfg.record) fine.path.record_start(0.0, x0);

  double t = 0.0;
  detail::decide(net, coarse, t, T, coarse_control);
  detail::decide(net, fine, t, T, fine_control);

  CoupledClocks clocks(J);
  std::vector<Block> previous(J, Block::none);
  std::vector<std::array<double, 3>> rates(J);
  std::vector<std::uint8_t> exact_active(J);
  std::vector<std::uint8_t> b1(J);
  std::vector<std::uint8_t> ctl(J), ftl(J);

  while (t < T && !(coarse.exited && fine.exited)) {
    const double Hc = coarse.exited ? std::numeric_limits<double>::infinity() : coarse.horizon.H;
    const double Hf = fine.exited ? std::numeric_limits<double>::infinity() : fine.horizon.H;
    const double H = std::min(Hc, Hf);

    for (std::size_t j = 0; j < J; ++j) {
      ctl[j] = coarse.tl(j);
      ftl[j] = fine.tl(j);
    }
    const auto blocks = BlockPartition::from(ctl, ftl);
    for (std::size_t j = 0; j < J; ++j) {
      const Block b = blocks.block[j];
      b1[j] = b == Block::b1;
      exact_active[j] = b != Block::b1;
      if (b != previous[j] && b != Block::b1) {
        for (std::size_t i = 0; i < 3; ++i) {
          clocks.R[j][i] = 0.0;
          clocks.P[j][i] = pick(j, i).unit_exponential();
        }
      }
      previous[j] = b;
    }

    // B1
    std::vector<double> coarse_frozen = coarse.horizon.frozen;
    std::vector<double> fine_frozen = fine.horizon.frozen;
    State cvirt(d), fvirt(d);
    for (std::size_t i = 0; i < d; ++i) {
      cvirt[i] = coarse.live[i] + coarse.pending[i];
      fvirt[i] = fine.live[i] + fine.pending[i];
    }
    const auto r1 = block_b1_update(net, cvirt, fvirt, coarse_frozen, fine_frozen, b1, t, H, coarse.cfg.delta,
                                    fine.cfg.delta, coarse.cfg.cost, pick);
    for (std::size_t i = 0; i < d; ++i) {
      coarse.pending[i] += r1.coarse_dx[i];
      fine.pending[i] += r1.fine_dx[i];
    }
    for (std::size_t j = 0; j < J; ++j) {
      coarse.pending_counts[j] += r1.coarse_counts[j];
      fine.pending_counts[j] += r1.fine_counts[j];
    }
    coarse.path.poisson_work += r1.poisson_work;

    // B2, B3, B4 share one exact loop so that every exact channel of a level
    // sees all exact firings of that level.
    auto refresh_rates = [&] {
      for (std::size_t j = 0; j < J; ++j) {
        if (!exact_active[j]) continue;
        const double dc = ctl[j] ? coarse_frozen[j] : coarse.rate(net, j);
        const double df = ftl[j] ? fine_frozen[j] : fine.rate(net, j);
        rates[j] = split_rates(dc, df);
      }
    };
    refresh_rates();
    double tr = t;
    while (tr < H) {
      const auto ev = coupled_exact_update(tr, H, clocks, rates, exact_active, pick);
      tr = ev.t;
      if (!ev.fired) break;
      const std::size_t j = ev.channel;
      const auto& nu = net.nu(j);
      auto apply = [&](detail::CoupledLeg& leg, bool leaped) {
        if (leaped) {
          for (std::size_t i = 0; i < d; ++i) leg.pending[i] += nu[i];
          leg.pending_counts[j] += 1;
        } else {
          for (std::size_t i = 0; i < d; ++i) leg.live[i] += nu[i];
          leg.path.firings[j] += 1;
          leg.path.n_exact += 1;
        }
      };
      if (ev.stream == 0 || ev.stream == 1) apply(coarse, ctl[j] != 0);
      if (ev.stream == 0 || ev.stream == 2) apply(fine, ftl[j] != 0);
      refresh_rates();
    }

    t = H;
    const bool coarse_due = !coarse.exited && Hc <= H;
    const bool fine_due = !fine.exited && Hf <= H;
    if (coarse_due) detail::close_epoch(net, coarse, t);
    if (fine_due) detail::close_epoch(net, fine, t);
    if (t < T) {
      if (coarse_due && !coarse.exited) detail::decide(net, coarse, t, T, coarse_control);
      if (fine_due && !fine.exited) detail::decide(net, fine, t, T, fine_control);
    }
  }

  CoupledPaths out;
  for (auto* leg : {&coarse, &fine}) {
    leg->path.final_state = leg->live;
    leg->path.final_time = leg->exited ? leg->path.exit_time : T;
  }
  out.coarse = std::move(coarse.path);
  out.fine = std::move(fine.path);
  return out;
}

}  // namespace mixedml
