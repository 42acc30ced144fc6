#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mixedml/mlmc.hpp"

using namespace mixedml;

namespace {

// Costs pinned for reproducible plans; measured on the development machine.
CostModel pinned_costs() {
  CostModel c;
  c.c_mnrm = 5.85e-8;
  c.c_tl = 3.85e-8;
  c.c_s = 1.0e-6;
  c.c_ssa = 3.56e-8;
  c.b = {2.9e-7, 1.0e-9, 3.63e-8, 1.72e-8};
  return c;
}

}  // namespace

TEST(Calibration, NoiselessFitRecoversCoefficients) {
  const std::array<double, 4> b{3.0e-7, 2.0e-8, 4.0e-8, 1.0e-8};
  std::vector<PoissonTiming> t;
  for (double l : {0.5, 1.0, 3.0, 7.0, 12.0, 15.0}) t.push_back({l, b[2] + b[3] * l});
  for (double l : {16.0, 40.0, 200.0, 1e3, 1e4}) t.push_back({l, b[0] + b[1] * std::log(l)});
  const auto fit = fit_poisson_cost(t);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit[i], b[i], 1e-9 * std::abs(b[i])) << i;
}

TEST(Calibration, FitRejectsTooFewPoints) {
  std::vector<PoissonTiming> t{{1.0, 1e-8}, {20.0, 2e-7}, {40.0, 2e-7}};
  EXPECT_THROW(fit_poisson_cost(t), CalibrationError);
}

TEST(Calibration, MeasuredCostsPositiveAndMonotone) {
  ProbeConfig probe;
  probe.mnrm_paths = 50;
  probe.ssa_paths = 50;
  probe.split_repeats = 5;
  probe.epoch_repeats = 5000;
  probe.poisson_repeats = 5000;
  const auto c = calibrate_costs(decay_model(), probe);
  EXPECT_GT(c.c_mnrm, 0.0);
  EXPECT_GT(c.c_tl, 0.0);
  EXPECT_GT(c.c_s, 0.0);
  EXPECT_GT(c.c_ssa, 0.0);
  EXPECT_GT(c.k1(), 0.0);
  double prev = 0.0;
  for (double l = 1.0; l <= 1e4; l *= 1.05) {
    const double v = c.poisson_cost(l);
    EXPECT_GT(v, 0.0);
    EXPECT_GE(v, prev * (1.0 - 1e-12)) << "lambda " << l;
    prev = v;
  }
}

TEST(Allocation, WorkedExample) {
  const std::vector<double> v{4.0, 1.0}, psi{1.0, 4.0};
  // C_A = eps_S makes (C_A / eps_S)^2 = 1
  EXPECT_EQ(allocate_samples(v, psi, 1.96, 1.96), (std::vector<std::int64_t>{8, 2}));
  EXPECT_DOUBLE_EQ(predicted_optimal_work(v, psi, 1.96, 1.96), 16.0);
}

TEST(Allocation, ZeroVarianceFloorsAtOne) {
  const std::vector<double> v{0.0, 2.0}, psi{1.0, 1.0};
  const auto m = allocate_samples(v, psi, 1.0, 0.1);
  EXPECT_EQ(m[0], 1);
  EXPECT_GT(m[1], 1);
}

TEST(Allocation, PerturbationDoesNotBeatPlanner) {
  // continuous Lagrange solution; move one M by +-25% and rescale the others
  // to restore sum V / M
  const std::vector<double> v{40.0, 6.0, 1.5, 0.3}, psi{1e-4, 3e-4, 7e-4, 1.6e-3};
  const double c = 1.96 / 0.05;
  double s = 0.0;
  for (std::size_t l = 0; l < v.size(); ++l) s += std::sqrt(v[l] * psi[l]);
  std::vector<double> m(v.size());
  for (std::size_t l = 0; l < v.size(); ++l) m[l] = c * c * std::sqrt(v[l] / psi[l]) * s;
  auto work = [&](const std::vector<double>& mm) {
    double w = 0;
    for (std::size_t l = 0; l < mm.size(); ++l) w += psi[l] * mm[l];
    return w;
  };
  double target = 0.0;
  for (std::size_t l = 0; l < v.size(); ++l) target += v[l] / m[l];
  const double base = work(m);
  for (std::size_t l = 0; l < v.size(); ++l)
    for (double f : {0.75, 1.25}) {
      auto p = m;
      p[l] *= f;
      double rest = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k)
        if (k != l) rest += v[k] / m[k];
      const double scale = rest / (target - v[l] / p[l]);
      if (!(scale > 0.0)) continue;
      for (std::size_t k = 0; k < v.size(); ++k)
        if (k != l) p[k] *= scale;
      EXPECT_GE(work(p), base * 0.99) << "level " << l << " factor " << f;
    }
}

TEST(Estimate, NoReactionsGivesInitialValue) {
  const auto net = decay_model(0.0, 25, 1.0);
  MlmcConfig cfg;
  const auto cost = pinned_costs();
  const auto planned = optimize_plan(net, cfg, cost, 3);
  const auto res = estimate(net, cfg, planned.plan, cost, 3);
  EXPECT_EQ(planned.plan.L, 0);
  EXPECT_EQ(res.value, 25.0);
  EXPECT_EQ(res.error.e_stat, 0.0);
}

TEST(Estimate, ForcedExactSingleLevelIsPlainMonteCarlo) {
  const auto net = decay_model();
  MlmcConfig cfg;
  cfg.force = ForcedMethod::exact;
  cfg.fixed_levels = 0;
  cfg.tol = 0.02;
  const auto cost = pinned_costs();
  const auto planned = optimize_plan(net, cfg, cost, 4);
  const auto res = estimate(net, cfg, planned.plan, cost, 4);
  EXPECT_EQ(res.levels.size(), 1u);
  EXPECT_EQ(res.error.e_disc, 0.0);
  EXPECT_EQ(res.error.e_exit, 0.0);
  EXPECT_NEAR(res.value, 100.0 * std::exp(-1.0), 3.0 * res.error.e_stat / planned.plan.c_a);
}

TEST(Estimate, TelescopesToFinestLevel) {
  const auto net = decay_model();
  MlmcConfig cfg;
  cfg.force = ForcedMethod::tau_leap_fixed;
  cfg.fixed_levels = 2;
  cfg.dt0 = 0.25;
  cfg.tol = 0.01;
  const auto cost = pinned_costs();
  const auto planned = optimize_plan(net, cfg, cost, 5);
  const auto res = estimate(net, cfg, planned.plan, cost, 5);
  const double finest = 100.0 * std::pow(1.0 - 0.0625, 16.0);
  const double sigma = res.error.e_stat / planned.plan.c_a;
  EXPECT_NEAR(res.value, finest, 3.0 * sigma);
}

TEST(Estimate, PredictedWorkMatchesRealized) {
  const auto net = decay_model();
  MlmcConfig cfg;
  cfg.tol = 0.05;
  const auto cost = pinned_costs();
  const auto planned = optimize_plan(net, cfg, cost, 6);
  const auto res = estimate(net, cfg, planned.plan, cost, 6);
  EXPECT_GT(res.modeled_work, 0.0);
  EXPECT_LE(res.modeled_work, 2.0 * planned.plan.predicted_work);
  EXPECT_GE(res.modeled_work, 0.5 * planned.plan.predicted_work);
  EXPECT_LE(std::abs(res.value - 100.0 * std::exp(-1.0)), 0.05 * 100.0 * std::exp(-1.0) * 2.0);
}

TEST(Estimate, SameResultForAnyWorkerCount) {
  const auto net = decay_model();
  MlmcConfig cfg;
  cfg.tol = 0.05;
  const auto cost = pinned_costs();
  std::vector<double> values;
  std::vector<std::vector<std::int64_t>> samples;
  for (std::size_t w : {1u, 2u, 4u}) {
    cfg.workers = w;
    const auto planned = optimize_plan(net, cfg, cost, 7);
    const auto res = estimate(net, cfg, planned.plan, cost, 7);
    values.push_back(res.value);
    samples.push_back(planned.plan.samples);
  }
  EXPECT_EQ(values[0], values[1]);
  EXPECT_EQ(values[0], values[2]);
  EXPECT_EQ(samples[0], samples[2]);
}

TEST(Planner, BiasBudgetUnreachableIsReported) {
  const auto net = decay_model();
  MlmcConfig cfg;
  cfg.force = ForcedMethod::tau_leap_fixed;
  cfg.tol = 0.01;
  cfg.levels_max = 0;
  EXPECT_THROW(optimize_plan(net, cfg, pinned_costs(), 8), PlannerError);
}

TEST(Planner, LevelMeshesNest) {
  const auto net = virus_model();
  MlmcConfig cfg;
  cfg.dt0 = 5.0;
  LevelSampler s(net, cfg, pinned_costs());
  EXPECT_DOUBLE_EQ(s.dt0(), 5.0);
  for (int l = 1; l <= 3; ++l) {
    EXPECT_TRUE(s.mesh(l).nests(s.mesh(l - 1)));
    EXPECT_DOUBLE_EQ(s.mesh(l).max_spacing(), 5.0 / std::pow(2.0, l));
  }
}

TEST(Complexity, PredictedWorkFallsAsToleranceGrows) {
  const auto net = decay_model();
  MlmcConfig cfg;
  const std::vector<double> tols{0.1, 0.05};
  const auto rows = complexity_study(net, tols, cfg, pinned_costs(), 9, 50);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].predicted_work, rows[1].predicted_work);
  EXPECT_GT(rows[1].ssa_work, 0.0);
  const std::vector<double> bad{0.05, 0.1};
  EXPECT_THROW(complexity_study(net, bad, cfg, pinned_costs(), 9, 10), std::invalid_argument);
}
