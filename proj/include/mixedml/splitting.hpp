#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "mixedml/model.hpp"
#include "mixedml/rng.hpp"
#include "mixedml/tauleap.hpp"

namespace mixedml {

// Machine-dependent work constants, in seconds. The defaults are one
// calibration run on a desktop core; `calibrate_costs` measures them.
struct CostModel {
  double c_mnrm = 6.0e-8;  // one exact (MNRM) step
  double c_tl = 4.0e-8;    // bookkeeping of one epoch
  double c_s = 2.0e-6;     // computing one split
  double c_ssa = 4.0e-8;   // one SSA step
  // C_P(lambda) = b1 + b2 ln(lambda) for lambda > 15, b3 + b4 lambda otherwise.
  std::array<double, 4> b{2.9e-7, 1.0e-9, 3.6e-8, 1.7e-8};

  double k1() const { return c_s / c_mnrm; }

  double poisson_cost(double lambda) const {
    if (lambda > 15.0) return b[0] + b[1] * std::log(lambda);
    return b[2] + b[3] * lambda;
  }
};

// Partition of the channels: tl[j] == 1 means channel j is tau-leaped.
struct Split {
  std::vector<std::uint8_t> tl;
  int kappa = 0;                  // prefix length under the penalized order
  std::vector<std::size_t> order; // sigma: rank -> channel
  double tau = 0.0;               // Chernoff step of the tau-leap set (gap if empty)
  bool computed = false;          // false when the gate chose pure exact without splitting

  bool tl_empty() const { return std::none_of(tl.begin(), tl.end(), [](std::uint8_t v) { return v != 0; }); }
  bool exact_empty() const { return std::all_of(tl.begin(), tl.end(), [](std::uint8_t v) { return v != 0; }); }
  std::vector<std::uint8_t> exact_mask() const {
    std::vector<std::uint8_t> m(tl.size());
    for (std::size_t j = 0; j < tl.size(); ++j) m[j] = tl[j] ? 0 : 1;
    return m;
  }
};

// theta_j = P(Pois(a_j dt) > min_{i: nu_ji < 0} x_i / |nu_ji|), 0 when channel j
// consumes nothing.
inline std::vector<double> exit_penalties(const ReactionNetwork& net, std::span<const std::int64_t> x,
                                          std::span<const double> a, double dt) {
  const std::size_t J = net.num_reactions();
  std::vector<double> theta(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& nu = net.nu(j);
    double q = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nu.size(); ++i)
      if (nu[i] < 0) q = std::min(q, static_cast<double>(x[i]) / static_cast<double>(-nu[i]));
    const double lambda = a[j] * dt;
    if (!std::isfinite(q) || !(lambda > 0.0)) continue;
    // P(N > q) = P(N >= floor(q) + 1) = regularized lower gamma P(floor(q) + 1, lambda)
    theta[j] = boost::math::gamma_p(std::floor(q) + 1.0, lambda);
  }
  return theta;
}

// Channels ranked by penalized activity (1 - theta_j) a_j, descending; ties
// keep the lower index first.
inline std::vector<std::size_t> penalized_order(std::span<const double> a, std::span<const double> theta) {
  std::vector<std::size_t> sigma(a.size());
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  std::vector<double> weighted(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) weighted[j] = (1.0 - theta[j]) * a[j];
  std::stable_sort(sigma.begin(), sigma.end(),
                   [&](std::size_t l, std::size_t r) { return weighted[l] > weighted[r]; });
  return sigma;
}

// Expected work of reaching t + gap with the tau-leap set at step tau_ch.
inline double work_tl(std::span<const double> a, std::span<const std::uint8_t> tl, double gap, double tau_ch,
                      const CostModel& cost) {
  const double steps = gap / std::min(tau_ch, gap);
  double per_step = cost.c_s;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (tl[j]) per_step += cost.poisson_cost(a[j] * tau_ch);
  return steps * per_step;
}

// Expected work of reaching t + gap with exact steps on the complement of tl.
inline double work_mnrm(std::span<const double> a, std::span<const std::uint8_t> tl, double gap,
                        const CostModel& cost) {
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (!tl[j]) total += a[j];
  if (total <= 0.0) return cost.c_mnrm;
  const double tau_mnrm = 1.0 / total;
  return gap / std::min(tau_mnrm, gap) * cost.c_mnrm;
}

namespace detail {

inline std::vector<std::uint8_t> prefix_mask(std::span<const std::size_t> sigma, int kappa) {
  std::vector<std::uint8_t> m(sigma.size(), 0);
  for (int r = 0; r < kappa; ++r) m[sigma[static_cast<std::size_t>(r)]] = 1;
  return m;
}

}  // namespace detail

// Cost-based split among the J + 1 prefixes of the penalized order. With
// prev_kappa < 0 every prefix is evaluated; otherwise only prev_kappa and
// its two neighbours.
inline Split best_split(const ReactionNetwork& net, std::span<const std::int64_t> x, std::span<const double> a,
                        double gap, double delta, const CostModel& cost, int prev_kappa) {
  const int J = static_cast<int>(net.num_reactions());
  double a0 = 0.0;
  for (double v : a) a0 += v;
  if (!(a0 > 0.0)) throw std::domain_error("best_split: total propensity is zero");
  const auto theta = exit_penalties(net, x, a, gap);
  const auto sigma = penalized_order(a, theta);

  int lo = 0;
  int hi = J;
  if (prev_kappa >= 0) {
    lo = std::max(0, prev_kappa - 1);
    hi = std::min(J, prev_kappa + 1);
  }
  Split best;
  double best_work = std::numeric_limits<double>::infinity();
  for (int kappa = lo; kappa <= hi; ++kappa) {
    auto mask = detail::prefix_mask(sigma, kappa);
    double tau = gap;
    if (kappa > 0) tau = chernoff_tau(net, ChernoffQuery{x, a, mask, delta, gap});
    if (!(tau > 0.0)) continue;
    const double w = work_tl(a, mask, gap, tau, cost) + work_mnrm(a, mask, gap, cost);
    if (w < best_work) {
      best_work = w;
      best.tl = std::move(mask);
      best.kappa = kappa;
      best.tau = tau;
    }
  }
  if (best.tl.empty()) {
    best.tl.assign(static_cast<std::size_t>(J), 0);
    best.kappa = 0;
    best.tau = gap;
  }
  best.order = sigma;
  best.computed = true;
  return best;
}

// Shortest penalized-order prefix holding at least `threshold` of the total
// penalized activity.
inline Split pareto_split(const ReactionNetwork& net, std::span<const std::int64_t> x, std::span<const double> a,
                          double dt, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::domain_error("pareto_split: threshold must lie in [0,1]");
  const auto theta = exit_penalties(net, x, a, dt);
  const auto sigma = penalized_order(a, theta);
  std::vector<double> weighted(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) weighted[j] = (1.0 - theta[j]) * a[j];
  double total = 0.0;
  for (std::size_t r = 0; r < sigma.size(); ++r) total += weighted[sigma[r]];

  int kappa = 0;
  if (total > 0.0 && threshold > 0.0) {
    double cum = 0.0;
    for (std::size_t r = 0; r < sigma.size(); ++r) {
      cum += weighted[sigma[r]];
      kappa = static_cast<int>(r) + 1;
      if (cum >= threshold * total) break;
    }
  }
  Split s;
  s.tl = detail::prefix_mask(sigma, kappa);
  s.kappa = kappa;
  s.order = sigma;
  s.tau = dt;
  s.computed = true;
  return s;
}

enum class SplitRule { cost, pareto };

struct SplitOptions {
  SplitRule rule = SplitRule::cost;
  double pareto_threshold = 0.95;
  // Chance of a full re-enumeration instead of the local search, to escape
  // local minima.
  double randomize_probability = 0.01;
};

// Decides (R_TL, R_MNRM) at one decision point. If the exact method reaches
// the next grid point more cheaply than one split computation, returns pure
// exact without computing a split. `kappa` carries the local-search state
// (negative before the first split).
inline Split one_step_mixing_rule(const ReactionNetwork& net, std::span<const std::int64_t> x,
                                  std::span<const double> a, double t, double delta, double next_grid, int& kappa,
                                  const CostModel& cost, const SplitOptions& opts, Stream& stream) {
  const std::size_t J = net.num_reactions();
  double a0 = 0.0;
  for (double v : a) a0 += v;
  if (!(a0 > 0.0)) throw std::domain_error("one_step_mixing_rule: total propensity is zero");
  const double gap = next_grid - t;

  Split s;
  if (cost.k1() / a0 >= gap) {
    s.tl.assign(J, 0);
    s.kappa = kappa;
    s.tau = gap;
    return s;
  }
  if (opts.rule == SplitRule::pareto) {
    s = pareto_split(net, x, a, gap, opts.pareto_threshold);
    if (!s.tl_empty()) s.tau = chernoff_tau(net, ChernoffQuery{x, a, s.tl, delta, gap});
  } else {
    int start = kappa;
    if (start >= 0 && opts.randomize_probability > 0.0 && stream.uniform() < opts.randomize_probability) start = -1;
    s = best_split(net, x, a, gap, delta, cost, start);
  }
  kappa = s.kappa;
  // Fall back to exact stepping when the tau-leap step would be shorter than
  // an expected exact step.
  if (!s.tl_empty() && !(s.tau >= 1.0 / a0)) {
    s.tl.assign(J, 0);
    s.tau = gap;
  }
  return s;
}

}  // namespace mixedml
