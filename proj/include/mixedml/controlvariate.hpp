#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mixedml/ledger.hpp"
#include "mixedml/mixedpath.hpp"
#include "mixedml/model.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"

namespace mixedml {

// Forward Euler solution of the mean-field ODE together with the integrated
// propensities Lambda_hat_j along it.
struct MeanFieldSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> z;           // (K+1) x d
  std::vector<std::vector<double>> lambda_hat;  // (K+1) x J
  std::vector<double> mu;                       // x0 + sum_j nu_j Lambda_hat_{j,K}

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  const std::vector<double>& terminal_lambda() const { return lambda_hat.back(); }
};

inline MeanFieldSolution mean_field_solve(const ReactionNetwork& net, std::span<const double> times) {
  if (times.empty()) throw std::invalid_argument("mean_field_solve: empty time grid");
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  MeanFieldSolution s;
  s.times.assign(times.begin(), times.end());
  const State& x0 = net.initial_state();
  std::vector<double> z(x0.begin(), x0.end());
  std::vector<double> lam(J, 0.0);
  s.z.push_back(z);
  s.lambda_hat.push_back(lam);
  std::vector<double> a(J);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double dt = times[k + 1] - times[k];
    for (std::size_t j = 0; j < J; ++j) a[j] = net.propensity_relaxed(j, z);
    for (std::size_t j = 0; j < J; ++j) {
      lam[j] += a[j] * dt;
      const auto& nu = net.nu(j);
      for (std::size_t i = 0; i < d; ++i) z[i] += static_cast<double>(nu[i]) * a[j] * dt;
    }
    s.z.push_back(z);
    s.lambda_hat.push_back(lam);
  }
  s.mu.assign(x0.begin(), x0.end());
  for (std::size_t j = 0; j < J; ++j) {
    const auto& nu = net.nu(j);
    for (std::size_t i = 0; i < d; ++i) s.mu[i] += static_cast<double>(nu[i]) * lam[j];
  }
  return s;
}

inline MeanFieldSolution mean_field_solve(const ReactionNetwork& net, const Mesh& mesh) {
  return mean_field_solve(net, mesh.points());
}

struct BridgeOptions {
  // Scale the excess beyond the last observed internal time by the terminal
  // propensity. Off by default: the process is
  // unit-rate in internal time.
  bool propensity_scaled = false;
};

// Y_j(Lambda_hat) given the ledger of one channel. Inside an observed
// interval: binomial thinning between the bracketing checkpoints. Beyond the
// last observed internal time: fresh Poisson increments.
inline std::int64_t bridge_sample(const CvLedger::Channel& ch, double lambda_hat, Stream& stream,
                                  double terminal_rate = 1.0, BridgeOptions opts = {}) {
  if (ch.bracketed && lambda_hat == ch.target) {
    const Checkpoint& lo = ch.lo;
    const Checkpoint& hi = ch.hi;
    if (lambda_hat <= lo.lambda) return lo.y;
    if (lambda_hat >= hi.lambda) return hi.y;
    const double p = (lambda_hat - lo.lambda) / (hi.lambda - lo.lambda);
    return lo.y + stream.binomial(hi.y - lo.y, p);
  }
  if (lambda_hat < ch.current.lambda)
    throw std::logic_error("bridge_sample: target inside the observed range but no bracket was captured");
  if (lambda_hat == ch.current.lambda) return ch.current.y;
  const double gap = lambda_hat - ch.current.lambda;
  return ch.current.y + stream.poisson(opts.propensity_scaled ? terminal_rate * gap : gap);
}

// Bridge over two explicit checkpoints, for callers that hold their own record.
inline std::int64_t bridge_sample(const Checkpoint& lo, const Checkpoint& hi, double lambda_hat, Stream& stream) {
  if (hi.lambda < lo.lambda || hi.y < lo.y) throw std::invalid_argument("bridge_sample: checkpoints out of order");
  if (lambda_hat < lo.lambda) throw std::invalid_argument("bridge_sample: target precedes the first checkpoint");
  if (lambda_hat == lo.lambda) return lo.y;
  if (lambda_hat >= hi.lambda) {
    if (lambda_hat == hi.lambda) return hi.y;
    return hi.y + stream.poisson(lambda_hat - hi.lambda);
  }
  const double p = (lambda_hat - lo.lambda) / (hi.lambda - lo.lambda);
  return lo.y + stream.binomial(hi.y - lo.y, p);
}

struct CvSample {
  double g_path = 0.0;  // g(X(T)) times the non-exit indicator
  double g_cv = 0.0;    // g(X_hat_K)
  bool exited = false;
  Path path;
};

// One level-0 mixed path and its control variate X_hat_K = x0 + sum_j nu_j Y_j(Lambda_hat_{j,K}).
inline CvSample cv_pair_sample(const ReactionNetwork& net, const State& x0, const Mesh& mesh0, const MixedConfig& cfg,
                               const MeanFieldSolution& mf, const StreamKey& key, BridgeOptions opts = {}) {
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  const auto& target = mf.terminal_lambda();
  CvLedger ledger(J, target);
  CvSample s;
  s.path = simulate_mixed_path(net, x0, mesh0, cfg, key, &ledger);
  s.exited = s.path.exited;
  s.g_path = s.exited ? 0.0 : net.observable()(s.path.final_state);

  Stream bridge(key.with_substream(substreams::bridge));
  State xh = x0;
  for (std::size_t j = 0; j < J; ++j) {
    const double rate = opts.propensity_scaled ? net.propensity(j, s.path.final_state) : 1.0;
    const std::int64_t y = bridge_sample(ledger.channel(j), target[j], bridge, rate, opts);
    const auto& nu = net.nu(j);
    for (std::size_t i = 0; i < d; ++i) xh[i] += nu[i] * y;
  }
  s.g_cv = net.observable()(xh);
  return s;
}

// E[g(X_hat_K)]. Exact for linear observables; otherwise a Monte Carlo
// average over independent Poisson counts Y_j ~ Pois(Lambda_hat_{j,K}).
inline double cv_expectation(const ReactionNetwork& net, const MeanFieldSolution& mf, Stream& stream,
                             std::int64_t samples = 100000) {
  const Observable& g = net.observable();
  if (g.is_linear()) return g(mf.mu);
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  const auto& target = mf.terminal_lambda();
  double acc = 0.0;
  for (std::int64_t m = 0; m < samples; ++m) {
    State x = net.initial_state();
    for (std::size_t j = 0; j < J; ++j) {
      const std::int64_t y = stream.poisson(target[j]);
      const auto& nu = net.nu(j);
      for (std::size_t i = 0; i < d; ++i) x[i] += nu[i] * y;
    }
    acc += g(x);
  }
  return acc / static_cast<double>(samples);
}

struct BetaMode {
  bool regression = false;
  double beta = 1.0;

  static BetaMode fixed(double b) { return {false, b}; }
  static BetaMode fitted() { return {true, 0.0}; }
};

struct CvEstimate {
  double mean = 0.0;
  double variance = 0.0;  // sample variance of g_path - beta g_cv
  double beta = 0.0;
};

inline CvEstimate cv_estimator(std::span<const double> g_path, std::span<const double> g_cv, double cv_mean,
                               BetaMode mode) {
  const std::size_t n = g_path.size();
  if (n < 2 || g_cv.size() != n) throw std::invalid_argument("cv_estimator: need at least 2 paired samples");
  double mp = 0.0, mc = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    mp += g_path[m];
    mc += g_cv[m];
  }
  mp /= static_cast<double>(n);
  mc /= static_cast<double>(n);
  CvEstimate e;
  e.beta = mode.beta;
  if (mode.regression) {
    double cov = 0.0, var = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      cov += (g_path[m] - mp) * (g_cv[m] - mc);
      var += (g_cv[m] - mc) * (g_cv[m] - mc);
    }
    e.beta = var > 0.0 ? cov / var : 0.0;
  }
  e.mean = mp - e.beta * (mc - cv_mean);
  const double mdiff = mp - e.beta * mc;
  double ss = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const double v = g_path[m] - e.beta * g_cv[m] - mdiff;
    ss += v * v;
  }
  e.variance = ss / static_cast<double>(n - 1);
  return e;
}

}  // namespace mixedml
