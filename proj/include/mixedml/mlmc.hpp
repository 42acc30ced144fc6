#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mixedml/controlvariate.hpp"
#include "mixedml/coupling.hpp"
#include "mixedml/error.hpp"
#include "mixedml/exact.hpp"
#include "mixedml/mixedpath.hpp"
#include "mixedml/model.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"
#include "mixedml/splitting.hpp"

namespace mixedml {

// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index, so the outcome does not depend on the schedule.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t k = std::min(workers, n);
  pool.reserve(k);
  for (std::size_t w = 0; w < k; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// Modeled work of one path from its counters.
inline double modeled_work(const Path& p, const CostModel& c) {
  return c.c_mnrm * static_cast<double>(p.n_exact) + c.c_tl * static_cast<double>(p.n_epochs) +
         c.c_s * static_cast<double>(p.n_splits) + p.poisson_work;
}

// ---------------------------------------------------------------------------
// Phase I: cost calibration

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoissonTiming {
  double lambda;
  double seconds;
};

// Least-squares fit of C_P: b1 + b2 ln(lambda) above 15, b3 + b4 lambda at or
// below. Slopes are clamped at 0 so that the fitted cost never decreases.
inline std::array<double, 4> fit_poisson_cost(std::span<const PoissonTiming> timings) {
  auto fit = [](const std::vector<double>& x, const std::vector<double>& y) -> std::array<double, 2> {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) throw CalibrationError("fit_poisson_cost: need at least two timings on each side of 15");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (!(std::abs(den) > 0.0)) throw CalibrationError("fit_poisson_cost: degenerate lambda grid");
    double slope = (n * sxy - sx * sy) / den;
    double icpt = (sy - slope * sx) / n;
    if (slope < 0.0) {
      slope = 0.0;
      icpt = sy / n;
    }
    return {icpt, slope};
  };
  std::vector<double> xl, yl, xh, yh;
  for (const auto& t : timings) {
    if (t.lambda > 15.0) {
      xh.push_back(std::log(t.lambda));
      yh.push_back(t.seconds);
    } else {
      xl.push_back(t.lambda);
      yl.push_back(t.seconds);
    }
  }
  const auto hi = fit(xh, yh);
  const auto lo = fit(xl, yl);
  std::array<double, 4> b{hi[0], hi[1], lo[0], lo[1]};
  // keep every cost strictly positive
  constexpr double floor = 1e-12;
  if (b[2] < floor) b[2] = floor;
  // and never cheaper just above the switch than at it
  const double at_switch = b[2] + b[3] * 15.0;
  if (b[0] + b[1] * std::log(15.0) < at_switch) b[0] = at_switch - b[1] * std::log(15.0);
  return b;
}

struct ProbeConfig {
  std::size_t mnrm_paths = 20;
  std::size_t ssa_paths = 20;
  std::size_t split_states = 32;
  std::size_t split_repeats = 20;
  std::size_t epoch_repeats = 20000;
  std::size_t poisson_repeats = 20000;
  std::uint64_t seed = 12345;
};

inline CostModel calibrate_costs(const ReactionNetwork& net, const ProbeConfig& probe = {}) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  auto require = [](double elapsed, double count, const char* what) {
    if (!(elapsed > 0.0) || !(count > 0.0))
      throw CalibrationError(std::string("calibrate_costs: could not time ") + what +
                             "; timer resolution too coarse for the batch, increase the probe sizes");
  };
  const std::size_t J = net.num_reactions();
  const double T = net.final_time();
  const State& x0 = net.initial_state();
  CostModel c;
  const StreamKey base{detail::splitmix64(probe.seed), 0xCA11u, 0, 0};

  {
    std::int64_t steps = 0;
    const auto t0 = clock::now();
    for (std::size_t m = 0; m < probe.mnrm_paths; ++m) {
      ChannelStreams streams(base.with_level(1).with_path(static_cast<std::uint32_t>(m)), J);
      steps += mnrm_path(net, x0, T, streams).n_exact;
    }
    const double el = seconds(t0, clock::now());
    require(el, static_cast<double>(steps), "MNRM steps");
    c.c_mnrm = el / static_cast<double>(steps);
  }

  std::vector<State> states;
  {
    std::int64_t steps = 0;
    const auto t0 = clock::now();
    for (std::size_t m = 0; m < probe.ssa_paths; ++m) {
      Stream s(base.with_level(2).with_path(static_cast<std::uint32_t>(m)));
      steps += ssa_path(net, x0, T, s).n_exact;
    }
    const double el = seconds(t0, clock::now());
    require(el, static_cast<double>(steps), "SSA steps");
    c.c_ssa = el / static_cast<double>(steps);
    // representative states for the split timing
    Stream s(base.with_level(3));
    const Path rec = ssa_path(net, x0, T, s, SimulationOptions{true});
    const std::size_t d = net.num_species();
    const std::size_t K = rec.num_points();
    for (std::size_t k = 0; k < probe.split_states; ++k) {
      const std::size_t idx = K <= 1 ? 0 : k * (K - 1) / std::max<std::size_t>(probe.split_states - 1, 1);
      const auto x = rec.state_at(idx, d);
      states.emplace_back(x.begin(), x.end());
    }
  }

  {
    std::size_t calls = 0;
    std::vector<double> a(J);
    double sink = 0.0;
    const auto t0 = clock::now();
    for (std::size_t r = 0; r < probe.split_repeats; ++r) {
      for (const auto& x : states) {
        net.propensities(x, a);
        double a0 = 0.0;
        for (double v : a) a0 += v;
        if (!(a0 > 0.0)) continue;
        sink += best_split(net, x, a, T / 4.0, 1e-3, c, -1).tau;
        ++calls;
      }
    }
    const double el = seconds(t0, clock::now());
    require(el, static_cast<double>(calls), "split computations");
    c.c_s = el / static_cast<double>(calls) + 0.0 * sink;
  }

  {
    std::vector<double> a(J);
    std::vector<std::uint8_t> none(J, 0);
    Stream s(base.with_level(4));
    std::int64_t sink = 0;
    const auto t0 = clock::now();
    for (std::size_t r = 0; r < probe.epoch_repeats; ++r) {
      net.propensities(x0, a);
      const auto inc = tau_leap_update(net, x0, a, none, 0.1, s);
      sink += inc.exited ? 1 : 0;
    }
    const double el = seconds(t0, clock::now());
    require(el, static_cast<double>(probe.epoch_repeats), "tau-leap epochs");
    c.c_tl = el / static_cast<double>(probe.epoch_repeats) + 0.0 * static_cast<double>(sink);
  }

  {
    std::vector<PoissonTiming> timings;
    Stream s(base.with_level(5));
    const std::vector<double> grid{0.5, 1, 2, 4, 6, 8, 10, 12, 14, 20, 50, 100, 300, 1000, 3000, 10000};
    std::int64_t sink = 0;
    for (double lambda : grid) {
      const auto t0 = clock::now();
      for (std::size_t r = 0; r < probe.poisson_repeats; ++r) sink += s.poisson(lambda);
      const double el = seconds(t0, clock::now());
      require(el, static_cast<double>(probe.poisson_repeats), "Poisson draws");
      timings.push_back({lambda, el / static_cast<double>(probe.poisson_repeats)});
    }
    c.b = fit_poisson_cost(timings);
    if (sink < 0) c.b[0] += 0.0;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Phase II and III

struct MlmcConfig {
  double tol = 0.05;  // relative
  double confidence = 0.95;
  double theta_split = 2.0 / 3.0;
  double dt0 = 0.0;  // 0 selects T / 4
  std::size_t refinement = 2;
  int levels_max = 8;
  int fixed_levels = -1;  // >= 0 skips the bias test and uses this L
  bool cv = false;
  SplitOptions split;
  ForcedMethod force = ForcedMethod::none;
  std::size_t pilot_min = 64;
  std::size_t pilot_max = 2048;
  double pilot_rel_se = 0.25;
  std::size_t probe_paths = 16;
  std::size_t workers = 1;
  std::size_t mean_field_steps = 20000;
  std::int64_t cv_aux_samples = 100000;
  BridgeOptions bridge;
  DualMode dual = DualMode::adaptive;
};

struct MlmcPlan {
  double tol = 0.0;
  double confidence = 0.95;
  double theta_split = 2.0 / 3.0;
  double dt0 = 0.0;
  std::size_t refinement = 2;
  int L = 0;
  std::vector<double> delta;
  std::vector<std::int64_t> samples;
  double g_scale = 1.0;
  double c_a = 1.96;
  double eps_exit = 0.0;
  double eps_disc = 0.0;
  double eps_stat = 0.0;
  bool cv = false;
  double predicted_work = 0.0;

  double dt(int level) const { return dt0 / std::pow(static_cast<double>(refinement), level); }
};

struct LevelStats {
  int level = 0;
  double dt = 0.0;
  double delta = 0.0;
  std::int64_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  double variance_rel_se = 0.0;
  double psi = 0.0;  // modeled work per sample, seconds
  double e_disc = 0.0;
  double e_disc_se = 0.0;
  double n_tl_mean = 0.0;
  double n_tl_second = 0.0;
  double n_exact_mean = 0.0;
  std::int64_t exits = 0;
  double modeled_work = 0.0;
  double wall_seconds = 0.0;
  double plain_variance = 0.0;  // level 0 with CV: variance of g alone
};

class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One MLMC sample: a single path at level 0, a coupled pair above.
struct LevelSample {
  double diff = 0.0;
  double g_fine = 0.0;
  double g_coarse = 0.0;
  double g_cv = 0.0;
  double work = 0.0;
  std::int64_t n_tl = 0;
  std::int64_t n_exact = 0;
  bool exited = false;
  double disc = 0.0;
};

namespace phase {
constexpr std::uint64_t probe = 1;
constexpr std::uint64_t pilot = 2;
constexpr std::uint64_t estimate = 3;
constexpr std::uint64_t auxiliary = 4;
}  // namespace phase

inline std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t ph) {
  return detail::splitmix64(seed * 0x100000001B3ULL + ph);
}

// Draws level samples for a fixed mesh hierarchy.
class LevelSampler {
 public:
  LevelSampler(const ReactionNetwork& net, const MlmcConfig& cfg, const CostModel& cost)
      : net_(&net), cfg_(cfg), cost_(cost) {
    dt0_ = cfg.dt0 > 0.0 ? cfg.dt0 : net.final_time() / 4.0;
    base_ = Mesh::with_spacing(net.final_time(), dt0_);
    dt0_ = base_.max_spacing();
  }

  double dt0() const { return dt0_; }
  Mesh mesh(int level) const {
    std::size_t f = 1;
    for (int l = 0; l < level; ++l) f *= cfg_.refinement;
    return f == 1 ? base_ : base_.refined(f);
  }

  void enable_cv(const MeanFieldSolution* mf, double cv_mean) {
    mf_ = mf;
    cv_mean_ = cv_mean;
  }
  bool cv() const { return mf_ != nullptr; }
  double cv_mean() const { return cv_mean_; }

  MixedConfig config(double delta, bool record) const {
    MixedConfig m;
    m.delta = delta;
    m.cost = cost_;
    m.split = cfg_.split;
    m.force = cfg_.force;
    m.record = record;
    return m;
  }

  // Samples [first, first + count) of `level`. When `with_disc` is set the
  // fine leg is recorded and its discretization error computed.
  std::vector<LevelSample> run(int level, double delta_fine, double delta_coarse, std::uint64_t seed,
                               std::size_t first, std::size_t count, bool with_disc) const {
    std::vector<LevelSample> out(count);
    const Mesh fine = mesh(level);
    const Mesh coarse = level > 0 ? mesh(level - 1) : Mesh();
    const MixedConfig fcfg = config(delta_fine, with_disc);
    const MixedConfig ccfg = config(delta_coarse, false);
    const Observable& g = net_->observable();
    const State& x0 = net_->initial_state();
    parallel_for(count, cfg_.workers, [&](std::size_t i) {
      const StreamKey key{seed, static_cast<std::uint32_t>(level), static_cast<std::uint32_t>(first + i), 0};
      LevelSample s;
      const Path* fpath = nullptr;
      Path single;
      CoupledPaths pair;
      if (level == 0) {
        if (mf_) {
          CvSample cs = cv_pair_sample(*net_, x0, fine, fcfg, *mf_, key, cfg_.bridge);
          single = std::move(cs.path);
          s.g_fine = cs.g_path;
          s.g_cv = cs.g_cv;
          s.diff = cs.g_path - cs.g_cv + cv_mean_;
        } else {
          single = simulate_mixed_path(*net_, x0, fine, fcfg, key);
          s.g_fine = single.exited ? 0.0 : g(single.final_state);
          s.diff = s.g_fine;
        }
        fpath = &single;
        s.work = modeled_work(single, cost_);
      } else {
        pair = simulate_coupled_paths(*net_, x0, coarse, fine, ccfg, fcfg, key);
        s.g_fine = pair.fine.exited ? 0.0 : g(pair.fine.final_state);
        s.g_coarse = pair.coarse.exited ? 0.0 : g(pair.coarse.final_state);
        s.diff = s.g_fine - s.g_coarse;
        fpath = &pair.fine;
        s.work = modeled_work(pair.fine, cost_) + modeled_work(pair.coarse, cost_);
      }
      s.n_tl = fpath->n_tl;
      s.n_exact = fpath->n_exact;
      s.exited = fpath->exited;
      if (with_disc && !fpath->exited) s.disc = path_discretization_error(*fpath, dual_weights(*fpath, *net_, g, cfg_.dual), *net_);
      out[i] = s;
    });
    return out;
  }

 private:
  const ReactionNetwork* net_;
  MlmcConfig cfg_;
  CostModel cost_;
  double dt0_ = 0.0;
  Mesh base_;
  const MeanFieldSolution* mf_ = nullptr;
  double cv_mean_ = 0.0;
};

inline LevelStats summarize_level(std::span<const LevelSample> s, int level, double dt, double delta) {
  LevelStats st;
  st.level = level;
  st.dt = dt;
  st.delta = delta;
  st.samples = static_cast<std::int64_t>(s.size());
  if (s.empty()) return st;
  const double n = static_cast<double>(s.size());
  double sum = 0, work = 0, ntl = 0, ntl2 = 0, nex = 0, gsum = 0;
  for (const auto& x : s) {
    sum += x.diff;
    work += x.work;
    ntl += static_cast<double>(x.n_tl);
    ntl2 += static_cast<double>(x.n_tl) * static_cast<double>(x.n_tl);
    nex += static_cast<double>(x.n_exact);
    gsum += x.g_fine;
    if (x.exited) ++st.exits;
  }
  st.mean = sum / n;
  st.modeled_work = work;
  st.psi = work / n;
  st.n_tl_mean = ntl / n;
  st.n_tl_second = ntl2 / n;
  st.n_exact_mean = nex / n;
  if (s.size() >= 2) {
    double m2 = 0, m4 = 0, g2 = 0;
    const double gm = gsum / n;
    for (const auto& x : s) {
      const double r = x.diff - st.mean;
      m2 += r * r;
      m4 += r * r * r * r;
      g2 += (x.g_fine - gm) * (x.g_fine - gm);
    }
    st.variance = m2 / (n - 1.0);
    st.plain_variance = g2 / (n - 1.0);
    m2 /= n;
    m4 /= n;
    st.variance_rel_se = m2 > 0.0 ? std::sqrt(std::max(m4 - m2 * m2, 0.0) / n) / m2 : 0.0;
  }
  std::vector<double> disc(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) disc[i] = s[i].disc;
  const auto de = sample_mean(disc);
  st.e_disc = de.mean;
  st.e_disc_se = de.se;
  return st;
}

// M_l = ceil((C_A / eps_S)^2 sqrt(V_l / psi_l) sum_k sqrt(V_k psi_k)), at least 1.
inline std::vector<std::int64_t> allocate_samples(std::span<const double> variances, std::span<const double> works,
                                                  double c_a, double eps_stat) {
  if (variances.size() != works.size()) throw std::invalid_argument("allocate_samples: length mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < variances.size(); ++l) total += std::sqrt(std::max(variances[l], 0.0) * works[l]);
  const double scale = (c_a / eps_stat) * (c_a / eps_stat);
  std::vector<std::int64_t> m(variances.size(), 1);
  for (std::size_t l = 0; l < variances.size(); ++l) {
    if (!(variances[l] > 0.0) || !(works[l] > 0.0)) continue;
    const double v = scale * std::sqrt(variances[l] / works[l]) * total;
    m[l] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(v - 1e-9)));
  }
  return m;
}

// Predicted optimal work ((C_A / eps_S) sum_l sqrt(V_l psi_l))^2.
inline double predicted_optimal_work(std::span<const double> variances, std::span<const double> works, double c_a,
                                     double eps_stat) {
  double total = 0.0;
  for (std::size_t l = 0; l < variances.size(); ++l) total += std::sqrt(std::max(variances[l], 0.0) * works[l]);
  const double r = c_a / eps_stat * total;
  return r * r;
}

// Mean field and E[g(X_hat_K)] for the level-0 control variate.
struct CvContext {
  MeanFieldSolution mean_field;
  double expectation = 0.0;
};

inline CvContext make_cv_context(const ReactionNetwork& net, const MlmcConfig& cfg, std::uint64_t seed) {
  CvContext c;
  c.mean_field = mean_field_solve(net, Mesh::uniform(net.final_time(), std::max<std::size_t>(cfg.mean_field_steps, 1)));
  Stream aux(StreamKey{phase_seed(seed, phase::auxiliary), 0xC0u, 0, 0});
  c.expectation = cv_expectation(net, c.mean_field, aux, cfg.cv_aux_samples);
  return c;
}

struct PlanResult {
  MlmcPlan plan;
  std::vector<LevelStats> pilot;
};

inline PlanResult optimize_plan(const ReactionNetwork& net, const MlmcConfig& cfg, const CostModel& cost,
                                std::uint64_t seed, const CvContext* cv = nullptr) {
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw std::domain_error("optimize_plan: tol must lie in (0,1)");
  if (!(cfg.theta_split > 0.0 && cfg.theta_split < 1.0))
    throw std::domain_error("optimize_plan: theta_split must lie in (0,1)");
  if (cfg.refinement < 2) throw std::domain_error("optimize_plan: refinement must be at least 2");
  LevelSampler sampler(net, cfg, cost);
  if (cfg.cv && cv) sampler.enable_cv(&cv->mean_field, cv->expectation);
  PlanResult out;
  MlmcPlan& plan = out.plan;
  plan.tol = cfg.tol;
  plan.confidence = cfg.confidence;
  plan.theta_split = cfg.theta_split;
  plan.dt0 = sampler.dt0();
  plan.refinement = cfg.refinement;
  plan.c_a = confidence_constant(cfg.confidence);
  plan.cv = sampler.cv();

  const double tol2 = cfg.tol * cfg.tol;
  const std::uint64_t probe_seed = phase_seed(seed, phase::probe);
  const std::uint64_t pilot_seed = phase_seed(seed, phase::pilot);
  std::vector<double> deltas;

  auto pilot_level = [&](int level) {
    const double coarse_delta = level > 0 ? deltas[static_cast<std::size_t>(level - 1)] : 0.0;
    const double budget = tol2 / static_cast<double>(level + 1);
    double delta = std::min(budget, 0.5);
    if (cfg.force == ForcedMethod::none && cfg.probe_paths > 0) {
      const auto probe = sampler.run(level, delta, coarse_delta, probe_seed, 0, cfg.probe_paths, false);
      double ntl = 0.0;
      for (const auto& p : probe) ntl += static_cast<double>(p.n_tl);
      ntl /= static_cast<double>(probe.size());
      delta = std::min(budget / std::max(ntl, 1.0), 0.5);
    }
    deltas.push_back(delta);
    std::vector<LevelSample> samples;
    std::size_t m = cfg.pilot_min;
    auto more = sampler.run(level, delta, coarse_delta, pilot_seed, 0, m, true);
    samples.insert(samples.end(), more.begin(), more.end());
    LevelStats st = summarize_level(samples, level, plan.dt(level), delta);
    while (st.variance > 0.0 && st.variance_rel_se > cfg.pilot_rel_se && samples.size() < cfg.pilot_max) {
      more = sampler.run(level, delta, coarse_delta, pilot_seed, samples.size(), samples.size(), true);
      samples.insert(samples.end(), more.begin(), more.end());
      st = summarize_level(samples, level, plan.dt(level), delta);
    }
    return st;
  };

  out.pilot.push_back(pilot_level(0));
  plan.g_scale = std::max(std::abs(out.pilot[0].mean), 1.0);
  const double tol_abs = cfg.tol * plan.g_scale;
  plan.eps_exit = tol2 * plan.g_scale;
  const double rest = tol_abs - plan.eps_exit;
  plan.eps_disc = (1.0 - cfg.theta_split) * rest;
  plan.eps_stat = cfg.theta_split * rest;

  int L = 0;
  if (cfg.fixed_levels >= 0) {
    for (L = 1; L <= cfg.fixed_levels; ++L) out.pilot.push_back(pilot_level(L));
    L = cfg.fixed_levels;
  } else {
    while (std::abs(out.pilot.back().e_disc) > plan.eps_disc) {
      if (L >= cfg.levels_max) {
        std::ostringstream msg;
        msg << "optimize_plan: bias budget " << plan.eps_disc << " not reached by level " << L
            << " (estimated discretization error " << out.pilot.back().e_disc << " +/- " << out.pilot.back().e_disc_se
            << ", dt " << out.pilot.back().dt << "); raise --levels-max or --tol";
        throw PlannerError(msg.str());
      }
      ++L;
      out.pilot.push_back(pilot_level(L));
    }
  }
  plan.L = L;

  plan.delta.resize(static_cast<std::size_t>(L + 1));
  for (int l = 0; l <= L; ++l) {
    const auto& st = out.pilot[static_cast<std::size_t>(l)];
    const double rule = tol2 / (static_cast<double>(L + 1) * std::max(st.n_tl_mean, 1.0));
    plan.delta[static_cast<std::size_t>(l)] = std::min(deltas[static_cast<std::size_t>(l)], rule);
  }
  std::vector<double> v, w;
  for (const auto& st : out.pilot) {
    v.push_back(st.variance);
    w.push_back(std::max(st.psi, cost.c_tl));
  }
  plan.samples = allocate_samples(v, w, plan.c_a, plan.eps_stat);
  plan.predicted_work = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) plan.predicted_work += w[l] * static_cast<double>(plan.samples[l]);
  return out;
}

struct EstimateResult {
  double value = 0.0;
  ErrorReport error;
  std::vector<LevelStats> levels;
  double modeled_work = 0.0;    // sum of modeled per-sample work, seconds
  double predicted_work = 0.0;  // the plan's sum psi_l M_l
  double optimal_work = 0.0;    // ((C_A / eps_S) sum sqrt(V psi))^2 with realized V, psi
  double wall_seconds = 0.0;
  double cv_expectation = 0.0;
  double cv_reduction = 1.0;  // var(g) / var(g - g_cv) at level 0
};

inline EstimateResult estimate(const ReactionNetwork& net, const MlmcConfig& cfg, const MlmcPlan& plan,
                               const CostModel& cost, std::uint64_t seed, const CvContext* cv = nullptr) {
  using clock = std::chrono::steady_clock;
  MlmcConfig run_cfg = cfg;
  run_cfg.dt0 = plan.dt0;
  run_cfg.refinement = plan.refinement;
  LevelSampler sampler(net, run_cfg, cost);
  if (plan.cv) {
    if (!cv) throw std::invalid_argument("estimate: plan uses the control variate but no context was given");
    sampler.enable_cv(&cv->mean_field, cv->expectation);
  }
  EstimateResult r;
  const std::uint64_t s3 = phase_seed(seed, phase::estimate);
  std::vector<double> v, w;
  std::vector<std::int64_t> m;
  const auto t_all = clock::now();
  for (int l = 0; l <= plan.L; ++l) {
    const std::size_t M = static_cast<std::size_t>(plan.samples[static_cast<std::size_t>(l)]);
    const double df = plan.delta[static_cast<std::size_t>(l)];
    const double dc = l > 0 ? plan.delta[static_cast<std::size_t>(l - 1)] : 0.0;
    const auto t0 = clock::now();
    const auto samples = sampler.run(l, df, dc, s3, 0, M, l == plan.L);
    const double wall = std::chrono::duration<double>(clock::now() - t0).count();
    LevelStats st = summarize_level(samples, l, plan.dt(l), df);
    st.wall_seconds = wall;
    r.value += st.mean;
    r.modeled_work += st.modeled_work;
    v.push_back(st.variance);
    w.push_back(std::max(st.psi, cost.c_tl));
    m.push_back(st.samples);
    r.levels.push_back(st);
  }
  r.wall_seconds = std::chrono::duration<double>(clock::now() - t_all).count();
  r.predicted_work = plan.predicted_work;
  r.optimal_work = predicted_optimal_work(v, w, plan.c_a, plan.eps_stat);
  r.error.e_stat = statistical_half_width(v, m, plan.confidence);
  const auto& top = r.levels.back();
  r.error.e_disc = top.e_disc;
  r.error.e_disc_se = top.e_disc_se;
  r.error.e_exit = exit_error_bound(plan.delta.back(), top.n_tl_mean, top.n_tl_second, plan.g_scale);
  if (plan.cv) {
    r.cv_expectation = cv->expectation;
    const auto& l0 = r.levels.front();
    r.cv_reduction = l0.variance > 0.0 ? l0.plain_variance / l0.variance : 1.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Complexity study

struct SsaBaseline {
  double variance = 0.0;
  double mean = 0.0;
  double mean_steps = 0.0;
  double seconds_per_path = 0.0;
  std::size_t paths = 0;
};

inline SsaBaseline ssa_baseline(const ReactionNetwork& net, std::size_t paths, std::uint64_t seed,
                                std::size_t workers = 1) {
  using clock = std::chrono::steady_clock;
  std::vector<double> g(paths), steps(paths);
  const std::uint64_t s = phase_seed(seed, phase::auxiliary);
  const auto t0 = clock::now();
  parallel_for(paths, workers, [&](std::size_t i) {
    Stream st(StreamKey{s, 0x55Au, static_cast<std::uint32_t>(i), 0});
    const Path p = ssa_path(net, net.initial_state(), net.final_time(), st);
    g[i] = net.observable()(p.final_state);
    steps[i] = static_cast<double>(p.n_exact);
  });
  SsaBaseline b;
  b.paths = paths;
  b.seconds_per_path = std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(paths) *
                       static_cast<double>(std::max<std::size_t>(workers, 1));
  const auto gm = sample_mean(g);
  b.mean = gm.mean;
  b.variance = paths >= 2 ? level_variance(g) : 0.0;
  b.mean_steps = sample_mean(steps).mean;
  return b;
}

// SSA sample count for a statistical error eps at constant C_A.
inline std::int64_t ssa_samples(double variance, double c_a, double eps) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((c_a / eps) * (c_a / eps) * variance)));
}

struct ComplexityRow {
  double tol = 0.0;
  int L = 0;
  double predicted_work = 0.0;
  double realized_work = 0.0;
  double ssa_work = 0.0;
  double ratio = 0.0;
  double value = 0.0;
  double e_stat = 0.0;
  double e_total = 0.0;
  double wall_seconds = 0.0;
};

inline std::vector<ComplexityRow> complexity_study(const ReactionNetwork& net, std::span<const double> tols,
                                                   const MlmcConfig& base, const CostModel& cost, std::uint64_t seed,
                                                   std::size_t ssa_paths = 200) {
  for (std::size_t i = 1; i < tols.size(); ++i)
    if (!(tols[i] < tols[i - 1])) throw std::invalid_argument("complexity_study: tolerances must decrease");
  const SsaBaseline ssa = ssa_baseline(net, ssa_paths, seed, base.workers);
  std::vector<ComplexityRow> rows;
  CvContext cv;
  if (base.cv) cv = make_cv_context(net, base, seed);
  for (double tol : tols) {
    MlmcConfig cfg = base;
    cfg.tol = tol;
    const auto planned = optimize_plan(net, cfg, cost, seed, base.cv ? &cv : nullptr);
    const auto res = estimate(net, cfg, planned.plan, cost, seed, base.cv ? &cv : nullptr);
    ComplexityRow row;
    row.tol = tol;
    row.L = planned.plan.L;
    row.predicted_work = planned.plan.predicted_work;
    row.realized_work = res.modeled_work;
    // SSA is unbiased but gets the same statistical budget as the mixed estimator
    const auto m_ssa = ssa_samples(ssa.variance, planned.plan.c_a, planned.plan.eps_stat);
    row.ssa_work = static_cast<double>(m_ssa) * cost.c_ssa * ssa.mean_steps;
    row.ratio = row.ssa_work > 0.0 ? row.realized_work / row.ssa_work : 0.0;
    row.value = res.value;
    row.e_stat = res.error.e_stat;
    row.e_total = res.error.total();
    row.wall_seconds = res.wall_seconds;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mixedml
