#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "mixedml/model.hpp"
#include "mixedml/path.hpp"

namespace mixedml {

// adaptive takes a backward step only where the forward step would be unstable
// (dt times the row-sum norm of the propagator above 1).
enum class DualMode { forward, backward, adaptive };

// phi[n] is the d-vector aligned to the path's n-th recorded time point.
struct DualWeights {
  std::vector<Eigen::VectorXd> phi;
  DualMode mode = DualMode::forward;
};

namespace detail {

// M = J_a^T nu^T (d x d), the linearized one-step propagator of the drift.
inline Eigen::MatrixXd drift_jacobian(const ReactionNetwork& net, std::span<const std::int64_t> x) {
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  const auto jac = net.propensity_jacobian(x);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < J; ++j) {
    const auto& nu = net.nu(j);
    for (std::size_t i = 0; i < d; ++i) {
      const double da = jac[j * d + i];
      if (da == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k)
        if (nu[k] != 0) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) += da * nu[k];
    }
  }
  return M;
}

}  // namespace detail

// Backward recursion of the dual weights along a recorded path, starting from
// the gradient of the observable at the terminal state.
inline DualWeights dual_weights(const Path& path, const ReactionNetwork& net, const Observable& g,
                                DualMode mode = DualMode::forward) {
  if (!path.recorded || path.times.empty()) throw std::invalid_argument("dual_weights: path carries no record");
  if (path.exited) throw std::invalid_argument("dual_weights: path exited the lattice");
  const std::size_t d = net.num_species();
  const std::size_t K = path.times.size() - 1;
  const auto grad = g.gradient(path.state_at(K, d));
  DualWeights w;
  w.mode = mode;
  w.phi.resize(K + 1);
  w.phi[K] = Eigen::Map<const Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t n = K; n-- > 0;) {
    const double dt = path.times[n + 1] - path.times[n];
    if (dt == 0.0) {
      w.phi[n] = w.phi[n + 1];
      continue;
    }
    const Eigen::MatrixXd M = detail::drift_jacobian(net, path.state_at(n, d));
    const bool explicit_step =
        mode == DualMode::forward || (mode == DualMode::adaptive && dt * M.lpNorm<Eigen::Infinity>() <= 1.0);
    if (explicit_step) {
      w.phi[n] = w.phi[n + 1] + dt * (M * w.phi[n + 1]);
    } else {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(I - dt * M);
      if (!lu.isInvertible())
        throw std::runtime_error("dual_weights: singular backward-Euler matrix at step " + std::to_string(n));
      w.phi[n] = lu.solve(w.phi[n + 1]);
    }
  }
  return w;
}

// Discretization error of one path:
//   sum_n (dt_n / 2) phi_{n+1} . sum_{j tau-leaped on step n} nu_j (a_j(x_{n+1}) - a_j(x_n)).
// Exited paths contribute 0.
inline double path_discretization_error(const Path& path, const DualWeights& w, const ReactionNetwork& net) {
  if (path.exited) return 0.0;
  const std::size_t d = net.num_species();
  const std::size_t J = net.num_reactions();
  const std::size_t K = path.times.size() - 1;
  double e = 0.0;
  for (std::size_t n = 0; n < K; ++n) {
    const auto mask = path.mask_at(n, J);
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; })) continue;
    const double dt = path.times[n + 1] - path.times[n];
    const auto x0 = path.state_at(n, d);
    const auto x1 = path.state_at(n + 1, d);
    const Eigen::VectorXd& phi = w.phi[n + 1];
    double acc = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (!mask[j]) continue;
      const double da = net.propensity(j, x1) - net.propensity(j, x0);
      if (da == 0.0) continue;
      const auto& nu = net.nu(j);
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += phi[static_cast<Eigen::Index>(i)] * static_cast<double>(nu[i]);
      acc += proj * da;
    }
    e += 0.5 * dt * acc;
  }
  return e;
}

struct MeanAndError {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline MeanAndError sample_mean(std::span<const double> v) {
  MeanAndError r;
  r.n = v.size();
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

// Sample average and standard error of the per-path discretization errors.
inline MeanAndError discretization_error_estimate(std::span<const Path> paths, std::span<const DualWeights> duals,
                                                  const ReactionNetwork& net) {
  if (paths.size() != duals.size())
    throw std::invalid_argument("discretization_error_estimate: paths and duals differ in length");
  std::vector<double> e(paths.size());
  for (std::size_t m = 0; m < paths.size(); ++m) e[m] = path_discretization_error(paths[m], duals[m], net);
  return sample_mean(e);
}

// Same, computing the forward dual weights on the fly.
inline MeanAndError discretization_error_estimate(std::span<const Path> paths, const ReactionNetwork& net,
                                                  const Observable& g) {
  std::vector<double> e(paths.size(), 0.0);
  for (std::size_t m = 0; m < paths.size(); ++m) {
    if (paths[m].exited) continue;
    e[m] = path_discretization_error(paths[m], dual_weights(paths[m], net, g), net);
  }
  return sample_mean(e);
}

// g_scale * P(exit), with P(exit) ~ delta E[N] - delta^2/2 (E[N^2] - E[N]) clamped to [0, 1].
inline double exit_error_bound(double delta, double n_tl_mean, double n_tl_second_moment, double g_scale) {
  if (delta <= 0.0) return 0.0;
  double p = delta * n_tl_mean - 0.5 * delta * delta * (n_tl_second_moment - n_tl_mean);
  p = std::clamp(p, 0.0, 1.0);
  // the truncated series can turn over for large delta * E[N]; the first term
  // alone is the bound in that regime
  if (delta * n_tl_mean >= 1.0) p = 1.0;
  return g_scale * p;
}

inline double level_variance(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("level_variance: need at least 2 samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(samples.size() - 1);
}

// Two-sided normal quantile C_A with P(|Z| <= C_A) = confidence.
inline double confidence_constant(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::domain_error("confidence must lie in (0,1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * confidence);
}

inline double statistical_half_width(std::span<const double> variances, std::span<const std::int64_t> counts,
                                     double confidence) {
  if (variances.size() != counts.size()) throw std::invalid_argument("statistical_half_width: length mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < variances.size(); ++l) {
    if (counts[l] < 1) throw std::invalid_argument("statistical_half_width: sample count below 1");
    s += variances[l] / static_cast<double>(counts[l]);
  }
  return confidence_constant(confidence) * std::sqrt(s);
}

struct ErrorReport {
  double e_exit = 0.0;
  double e_disc = 0.0;
  double e_disc_se = 0.0;
  double e_stat = 0.0;
  double total() const { return e_exit + std::abs(e_disc) + e_stat; }
};

}  // namespace mixedml
