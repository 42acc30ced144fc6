#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mixedml/exact.hpp"
#include "mixedml/model.hpp"
#include "mixedml/rng.hpp"

namespace mixedml {

// Inputs of the Chernoff step-size problem. `subset` flags the channels that
// will be tau-leaped; the others are ignored.
struct ChernoffQuery {
  std::span<const std::int64_t> state;
  std::span<const double> propensities;
  std::span<const std::uint8_t> subset;
  double delta = 1e-3;
  double horizon_gap = 1.0;
};

namespace detail {

struct ExposureTerm {
  double rate;
  double nu;
};

// min over s > 0 of  -s (x+1) + tau * sum_j a_j (exp(-s nu_j) - 1),
// the log of the Chernoff bound on P(x + sum_j nu_j Pois(a_j tau) <= -1).
// Returns early once the exponent is known to be <= log_bound.
inline double chernoff_log_bound(double x, double tau, std::span<const ExposureTerm> terms, double log_bound) {
  const double need = x + 1.0;
  auto deriv = [&](double s) {
    double g = -need;
    for (const auto& e : terms) g -= tau * e.rate * e.nu * std::exp(-s * e.nu);
    return g;
  };
  auto value = [&](double s) {
    double f = -s * need;
    for (const auto& e : terms) f += tau * e.rate * std::expm1(-s * e.nu);
    return f;
  };
  if (deriv(0.0) >= 0.0) return 0.0;  // the bound is vacuous at every s

  double consumption = 0.0;
  double max_neg = 1.0;
  for (const auto& e : terms)
    if (e.nu < 0.0) {
      consumption += e.rate * -e.nu;
      max_neg = std::max(max_neg, -e.nu);
    }
  double lo = 0.0;
  double hi = 1.0;
  while (deriv(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) break;
  }
  double s = std::log(need / std::max(tau * consumption, 1e-300)) / max_neg;
  if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);

  double best = value(s);
  for (int it = 0; it < 60; ++it) {
    if (best <= log_bound) return best;
    const double g = deriv(s);
    if (g < 0.0) lo = s;
    else hi = s;
    double h = 0.0;
    for (const auto& e : terms) h += tau * e.rate * e.nu * e.nu * std::exp(-s * e.nu);
    double next = h > 0.0 ? s - g / h : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - s);
    s = next;
    best = std::min(best, value(s));
    if (step <= 1e-12 * std::max(1.0, s) || hi - lo <= 1e-12 * std::max(1.0, hi)) break;
  }
  return best;
}

}  // namespace detail

// Largest step (capped at horizon_gap) for which the Chernoff bound on every
// coordinate's one-step exit probability is at most delta / d.
inline double chernoff_tau(const ReactionNetwork& net, const ChernoffQuery& q) {
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  const double log_di = std::log(q.delta / static_cast<double>(d));
  double tau = q.horizon_gap;
  std::vector<detail::ExposureTerm> terms;
  terms.reserve(J);
  for (std::size_t i = 0; i < d; ++i) {
    terms.clear();
    bool exposed = false;
    for (std::size_t j = 0; j < J; ++j) {
      if (!q.subset[j] || q.propensities[j] <= 0.0) continue;
      const auto nu = net.nu(j)[i];
      if (nu == 0) continue;
      terms.push_back({q.propensities[j], static_cast<double>(nu)});
      exposed = exposed || nu < 0;
    }
    if (!exposed) continue;
    const double x = static_cast<double>(q.state[i]);
    auto feasible = [&](double t) { return detail::chernoff_log_bound(x, t, terms, log_di) <= log_di; };
    if (feasible(tau)) continue;
    double lo = 0.0;
    double hi = tau;
    while (hi - lo > 1e-3 * hi) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid)) lo = mid;
      else hi = mid;
    }
    tau = lo;
  }
  return tau;
}

struct TauLeapIncrement {
  std::vector<std::int64_t> dx;
  std::vector<std::int64_t> counts;  // Poisson count per channel
  bool exited = false;
};

// dx = sum_{j in subset} nu_j Pois(a_j tau) with propensities frozen at entry.
// `pick(j)` returns the stream used for channel j.
template <typename StreamPicker>
TauLeapIncrement tau_leap_update(const ReactionNetwork& net, std::span<const std::int64_t> state,
                                 std::span<const double> propensities, std::span<const std::uint8_t> subset,
                                 double tau, StreamPicker&& pick) {
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  TauLeapIncrement inc;
  inc.dx.assign(d, 0);
  inc.counts.assign(J, 0);
  if (tau > 0.0) {
    for (std::size_t j = 0; j < J; ++j) {
      if (!subset[j] || propensities[j] <= 0.0) continue;
      const std::int64_t k = pick(j).poisson(propensities[j] * tau);
      inc.counts[j] = k;
      if (k == 0) continue;
      const auto& nu = net.nu(j);
      for (std::size_t i = 0; i < d; ++i) inc.dx[i] += nu[i] * k;
    }
  }
  for (std::size_t i = 0; i < d; ++i) inc.exited = inc.exited || state[i] + inc.dx[i] < 0;
  return inc;
}

inline TauLeapIncrement tau_leap_update(const ReactionNetwork& net, std::span<const std::int64_t> state,
                                        std::span<const double> propensities, std::span<const std::uint8_t> subset,
                                        double tau, Stream& stream) {
  return tau_leap_update(net, state, propensities, subset, tau, [&](std::size_t) -> Stream& { return stream; });
}

// Monte Carlo frequency of one-step exits at tau = chernoff_tau(query). A
// validation oracle for the step-size rule.
inline double empirical_exit_rate(const ReactionNetwork& net, const ChernoffQuery& q, std::int64_t n_samples,
                                  Stream& stream) {
  const double tau = chernoff_tau(net, q);
  if (tau <= 0.0) return 0.0;
  std::int64_t exits = 0;
  for (std::int64_t m = 0; m < n_samples; ++m)
    if (tau_leap_update(net, q.state, q.propensities, q.subset, tau, stream).exited) ++exits;
  return static_cast<double>(exits) / static_cast<double>(n_samples);
}

}  // namespace mixedml
