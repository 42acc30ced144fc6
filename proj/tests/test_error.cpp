#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mixedml/error.hpp"
#include "mixedml/mixedpath.hpp"

using namespace mixedml;

namespace {

Path one_step_path(std::int64_t x0, std::int64_t x1, double dt, std::uint8_t tl = 1) {
  Path p;
  p.record_start(0.0, State{x0});
  p.record_step(dt, State{x1}, std::vector<std::uint8_t>{tl});
  p.final_state = State{x1};
  p.final_time = dt;
  return p;
}

std::vector<Path> tau_leap_paths(const ReactionNetwork& net, double dt, int n, std::uint64_t seed) {
  MixedConfig cfg;
  cfg.force = ForcedMethod::tau_leap_fixed;
  cfg.record = true;
  const Mesh mesh = Mesh::with_spacing(net.final_time(), dt);
  std::vector<Path> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(simulate_mixed_path(net, net.initial_state(), mesh, cfg,
                                      StreamKey{seed, 0, static_cast<std::uint32_t>(i), 0}));
  return out;
}

}  // namespace

TEST(DualWeights, TerminalIsGradient) {
  const auto net = virus_model();
  Path p;
  p.record_start(0.0, net.initial_state());
  p.record_step(1.0, net.initial_state(), std::vector<std::uint8_t>(6, 0));
  const auto w = dual_weights(p, net, Observable::coordinate(3));
  ASSERT_EQ(w.phi.size(), 2u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(w.phi[1][i], i == 3 ? 1.0 : 0.0);
}

TEST(DualWeights, DecayOneStepRecursion) {
  const auto net = decay_model(2.0);
  const auto w = dual_weights(one_step_path(50, 40, 0.1), net, net.observable());
  EXPECT_DOUBLE_EQ(w.phi[1][0], 1.0);
  EXPECT_NEAR(w.phi[0][0], 1.0 - 2.0 * 0.1, 1e-15);
  const auto b = dual_weights(one_step_path(50, 40, 0.1), net, net.observable(), DualMode::backward);
  EXPECT_NEAR(b.phi[0][0], 1.0 / (1.0 + 2.0 * 0.1), 1e-15);
}

TEST(DualWeights, AdaptiveSwitchesOnUnstableSteps) {
  const auto net = decay_model(2.0);
  const auto small = dual_weights(one_step_path(50, 40, 0.1), net, net.observable(), DualMode::adaptive);
  EXPECT_NEAR(small.phi[0][0], 1.0 - 2.0 * 0.1, 1e-15);
  // dt * 2 > 1: the forward step would give -1
  const auto large = dual_weights(one_step_path(50, 40, 1.0), net, net.observable(), DualMode::adaptive);
  EXPECT_NEAR(large.phi[0][0], 1.0 / 3.0, 1e-15);
}

TEST(DualWeights, ZeroLengthStepKeepsWeight) {
  const auto net = decay_model();
  Path p;
  p.record_start(0.0, State{10});
  p.record_step(0.0, State{10}, std::vector<std::uint8_t>{0});
  p.record_step(0.5, State{8}, std::vector<std::uint8_t>{0});
  const auto w = dual_weights(p, net, net.observable());
  EXPECT_DOUBLE_EQ(w.phi[0][0], w.phi[1][0]);
}

TEST(DualWeights, RejectsUnrecordedOrExited) {
  const auto net = decay_model();
  Path p;
  EXPECT_THROW(dual_weights(p, net, net.observable()), std::invalid_argument);
  auto q = one_step_path(5, 4, 0.1);
  q.exited = true;
  EXPECT_THROW(dual_weights(q, net, net.observable()), std::invalid_argument);
}

TEST(DualWeights, BackwardSingularStepNamed) {
  // X -> 2X at rate 4: I - dt * 4 vanishes at dt = 0.25
  const auto net = decay_model(4.0);
  const auto p = one_step_path(5, 5, 0.25);
  const auto growth = make_network("growth", {{"X", 5}}, {{{{"X", 1}}, {{"X", 2}}, 4.0}}, 1.0, "X");
  try {
    dual_weights(p, growth, growth.observable(), DualMode::backward);
    FAIL() << "expected a singular step";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
  EXPECT_NO_THROW(dual_weights(p, net, net.observable(), DualMode::backward));
}

TEST(DualWeights, ForwardBackwardAgreeToSecondOrder) {
  const auto net = decay_model(1.0);
  std::vector<double> lh, ld;
  for (double dt : {0.2, 0.1, 0.05, 0.025, 0.0125}) {
    const auto p = one_step_path(100, 90, dt);
    const double f = dual_weights(p, net, net.observable()).phi[0][0];
    const double b = dual_weights(p, net, net.observable(), DualMode::backward).phi[0][0];
    lh.push_back(std::log(dt));
    ld.push_back(std::log(std::abs(f - b)));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    mx += lh[i];
    my += ld[i];
  }
  mx /= lh.size();
  my /= lh.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    sxy += (lh[i] - mx) * (ld[i] - my);
    sxx += (lh[i] - mx) * (lh[i] - mx);
  }
  EXPECT_GE(sxy / sxx, 1.9);
}

TEST(DualWeights, LinearInObservable) {
  const auto net = decay_model();
  const auto paths = tau_leap_paths(net, 0.25, 5, 3);
  for (const auto& p : paths) {
    const auto w1 = dual_weights(p, net, Observable::linear({1.0}));
    const auto w3 = dual_weights(p, net, Observable::linear({3.0}));
    for (std::size_t n = 0; n < w1.phi.size(); ++n) EXPECT_NEAR(w3.phi[n][0], 3.0 * w1.phi[n][0], 1e-12);
    EXPECT_NEAR(path_discretization_error(p, w3, net), 3.0 * path_discretization_error(p, w1, net), 1e-9);
  }
}

TEST(DiscretizationError, ConstantPropensityIsZero) {
  const auto net = birth_model();
  const auto paths = tau_leap_paths(net, 0.5, 20, 4);
  const auto e = discretization_error_estimate(paths, net, net.observable());
  EXPECT_EQ(e.mean, 0.0);
}

TEST(DiscretizationError, NoTauLeapIsZero) {
  const auto net = decay_model();
  const auto p = one_step_path(100, 60, 0.5, 0);
  EXPECT_EQ(path_discretization_error(p, dual_weights(p, net, net.observable()), net), 0.0);
}

TEST(DiscretizationError, ExitedPathContributesNothing) {
  const auto net = decay_model();
  auto p = one_step_path(100, 60, 0.5);
  const auto w = dual_weights(p, net, net.observable());
  p.exited = true;
  EXPECT_EQ(path_discretization_error(p, w, net), 0.0);
}

TEST(DiscretizationError, TracksAnalyticBiasOnDecay) {
  const auto net = decay_model();
  std::vector<double> lh, le;
  for (double dt : {0.5, 0.25, 0.125}) {
    const auto paths = tau_leap_paths(net, dt, 2000, 5);
    const auto e = discretization_error_estimate(paths, net, net.observable());
    const double bias = 100.0 * std::exp(-1.0) - 100.0 * std::pow(1.0 - dt, 1.0 / dt);
    if (dt == 0.25) {
      EXPECT_NEAR(e.mean, bias, 0.2 * bias);
    }
    EXPECT_GT(e.mean, 0.0);
    lh.push_back(std::log(dt));
    le.push_back(std::log(e.mean));
  }
  const double slope = (le[2] - le[0]) / (lh[2] - lh[0]);
  EXPECT_GE(slope, 0.7);
  EXPECT_LE(slope, 1.3);
}

TEST(ExitBound, Examples) {
  EXPECT_EQ(exit_error_bound(0.0, 100.0, 10100.0, 5.0), 0.0);
  EXPECT_NEAR(exit_error_bound(1e-4, 100.0, 10100.0, 1.0), 0.00995, 1e-12);
  EXPECT_NEAR(exit_error_bound(1e-4, 100.0, 10100.0, 36.0), 36.0 * 0.00995, 1e-10);
  EXPECT_DOUBLE_EQ(exit_error_bound(0.5, 1e6, 1e12, 2.0), 2.0);
}

TEST(ExitBound, MonotoneInDeltaAndSteps) {
  double prev = 0.0;
  for (double delta = 1e-5; delta < 1e-2; delta *= 1.5) {
    const double e = exit_error_bound(delta, 80.0, 80.0 * 80.0 + 80.0, 1.0);
    EXPECT_GE(e, prev);
    prev = e;
  }
  prev = 0.0;
  for (double n = 1.0; n < 1000.0; n *= 1.7) {
    const double e = exit_error_bound(1e-4, n, n * n + n, 1.0);
    EXPECT_GE(e, prev);
    prev = e;
  }
}

TEST(Statistics, LevelVariance) {
  EXPECT_DOUBLE_EQ(level_variance(std::vector<double>{0.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(level_variance(std::vector<double>{3.0, 3.0, 3.0}), 0.0);
  EXPECT_THROW(level_variance(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Statistics, HalfWidth) {
  EXPECT_NEAR(statistical_half_width(std::vector<double>{4.0}, std::vector<std::int64_t>{400}, 0.95), 0.196, 1e-3);
  EXPECT_EQ(statistical_half_width(std::vector<double>{0.0, 0.0}, std::vector<std::int64_t>{10, 3}, 0.95), 0.0);
  EXPECT_NEAR(confidence_constant(0.6827), 1.0, 1e-3);
  EXPECT_NEAR(confidence_constant(0.95), 1.959964, 1e-6);
  EXPECT_THROW(confidence_constant(1.0), std::domain_error);
}
