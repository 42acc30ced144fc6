#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mixedml/controlvariate.hpp"

using namespace mixedml;

namespace {

CvLedger::Channel bracketed(double lo_l, std::int64_t lo_y, double hi_l, std::int64_t hi_y, double target) {
  CvLedger::Channel c;
  c.bracketed = true;
  c.target = target;
  c.lo = {lo_l, lo_y};
  c.hi = {hi_l, hi_y};
  c.previous = c.lo;
  c.current = c.hi;
  return c;
}

double variance(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST(MeanField, DecayOneStep) {
  const auto net = decay_model();
  const std::vector<double> times{0.0, 0.1};
  const auto mf = mean_field_solve(net, times);
  EXPECT_NEAR(mf.z[1][0], 90.0, 1e-12);
  EXPECT_NEAR(mf.lambda_hat[1][0], 10.0, 1e-12);
  EXPECT_NEAR(mf.mu[0], 90.0, 1e-12);
}

TEST(MeanField, NoStepsAndZeroRates) {
  const auto net = decay_model();
  const std::vector<double> t0{0.0};
  const auto mf = mean_field_solve(net, t0);
  EXPECT_EQ(mf.steps(), 0u);
  EXPECT_EQ(mf.terminal_lambda()[0], 0.0);
  EXPECT_EQ(mf.mu[0], 100.0);
  const auto zero = decay_model(0.0, 7, 1.0);
  const auto mz = mean_field_solve(zero, Mesh::uniform(1.0, 10));
  for (const auto& z : mz.z) EXPECT_EQ(z[0], 7.0);
  for (const auto& l : mz.lambda_hat) EXPECT_EQ(l[0], 0.0);
}

TEST(MeanField, TerminalMeanEqualsEulerState) {
  for (const auto& net : {virus_model(), stiff_model(), decay_model()}) {
    const auto mf = mean_field_solve(net, Mesh::uniform(net.final_time(), 5000));
    for (std::size_t i = 0; i < net.num_species(); ++i)
      EXPECT_NEAR(mf.mu[i], mf.z.back()[i], 1e-9 * std::max(1.0, std::abs(mf.z.back()[i]))) << net.name() << " " << i;
    for (std::size_t k = 1; k < mf.lambda_hat.size(); ++k)
      for (std::size_t j = 0; j < net.num_reactions(); ++j) EXPECT_GE(mf.lambda_hat[k][j], mf.lambda_hat[k - 1][j]);
  }
}

TEST(Bridge, EndpointsReturnCheckpointCounts) {
  Stream s(StreamKey{1, 0, 0, 0});
  EXPECT_EQ(bridge_sample(Checkpoint{2.0, 3}, Checkpoint{4.0, 9}, 2.0, s), 3);
  EXPECT_EQ(bridge_sample(Checkpoint{2.0, 3}, Checkpoint{4.0, 9}, 4.0, s), 9);
  EXPECT_EQ(bridge_sample(bracketed(2.0, 3, 4.0, 9, 4.0), 4.0, s), 9);
  EXPECT_THROW(bridge_sample(Checkpoint{2.0, 3}, Checkpoint{4.0, 9}, 1.0, s), std::invalid_argument);
}

TEST(Bridge, ThinningMeanInsideBracket) {
  Stream s(StreamKey{2, 0, 0, 0});
  const auto ch = bracketed(2.0, 3, 4.0, 9, 3.0);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto y = bridge_sample(ch, 3.0, s);
    ASSERT_GE(y, 3);
    ASSERT_LE(y, 9);
    sum += static_cast<double>(y);
  }
  // Binomial(6, 1/2) on top of 3
  EXPECT_NEAR(sum / n, 6.0, 3.0 * std::sqrt(1.5 / n));
}

TEST(Bridge, PoissonBeyondLastCheckpoint) {
  Stream s(StreamKey{3, 0, 0, 0});
  CvLedger ledger(1, {5.0});
  ledger.advance(0, 2.0, 4);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(bridge_sample(ledger.channel(0), 5.0, s));
  EXPECT_NEAR(sum / n, 4.0 + 3.0, 3.0 * std::sqrt(3.0 / n));
}

TEST(Bridge, LedgerCapturesBracket) {
  CvLedger ledger(1, {2.5});
  ledger.advance(0, 1.0, 2);
  EXPECT_FALSE(ledger.channel(0).bracketed);
  ledger.drift(0, 1.0);
  ledger.jump(0);
  ledger.advance(0, 1.0, 3);
  const auto& ch = ledger.channel(0);
  ASSERT_TRUE(ch.bracketed);
  EXPECT_DOUBLE_EQ(ch.lo.lambda, 2.0);
  EXPECT_EQ(ch.lo.y, 3);
  EXPECT_DOUBLE_EQ(ch.hi.lambda, 3.0);
  EXPECT_EQ(ch.hi.y, 6);
}

TEST(CvPair, ZeroRateNetwork) {
  const auto net = decay_model(0.0, 12, 1.0);
  const Mesh mesh = Mesh::uniform(1.0, 4);
  const auto mf = mean_field_solve(net, mesh);
  const auto s = cv_pair_sample(net, net.initial_state(), mesh, MixedConfig{}, mf, StreamKey{1, 0, 0, 0});
  EXPECT_EQ(s.g_path, 12.0);
  EXPECT_EQ(s.g_cv, 12.0);
}

TEST(CvPair, ConstantRateMarginalIsPoisson) {
  // birth at rate 5 to T = 2: Lambda_hat = 10 and g_cv = Y(10) ~ Poisson(10)
  const auto net = birth_model();
  const Mesh mesh = Mesh::uniform(2.0, 4);
  const auto mf = mean_field_solve(net, mesh);
  ASSERT_NEAR(mf.terminal_lambda()[0], 10.0, 1e-12);
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const auto s =
        cv_pair_sample(net, net.initial_state(), mesh, MixedConfig{}, mf, StreamKey{4, 0, static_cast<std::uint32_t>(i), 0});
    sum += s.g_cv;
    sq += s.g_cv * s.g_cv;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 10.0, 3.0 * std::sqrt(10.0 / n));
  EXPECT_NEAR(sq / n - mean * mean, 10.0, 0.3);
}

TEST(CvPair, DecayCorrelatedAndUnbiased) {
  const auto net = decay_model();
  const Mesh mesh = Mesh::uniform(1.0, 4);
  const auto mf = mean_field_solve(net, Mesh::uniform(1.0, 2000));
  const int n = 1000;
  std::vector<double> gp(n), gc(n);
  for (int i = 0; i < n; ++i) {
    const auto s =
        cv_pair_sample(net, net.initial_state(), mesh, MixedConfig{}, mf, StreamKey{5, 0, static_cast<std::uint32_t>(i), 0});
    gp[i] = s.g_path;
    gc[i] = s.g_cv;
  }
  double mp = 0, mc = 0;
  for (int i = 0; i < n; ++i) {
    mp += gp[i];
    mc += gc[i];
  }
  mp /= n;
  mc /= n;
  double cov = 0;
  for (int i = 0; i < n; ++i) cov += (gp[i] - mp) * (gc[i] - mc);
  cov /= n - 1;
  EXPECT_GT(cov / std::sqrt(variance(gp) * variance(gc)), 0.0);
  // E[g_cv] = g(mu) for linear g
  EXPECT_NEAR(mc, mf.mu[0], 3.0 * std::sqrt(variance(gc) / n));
  Stream aux(StreamKey{1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(cv_expectation(net, mf, aux), mf.mu[0]);
}

TEST(CvEstimator, BetaZeroIsPlainMean) {
  const std::vector<double> gp{1, 2, 3, 4}, gc{9, 1, 5, 2};
  const auto e = cv_estimator(gp, gc, 100.0, BetaMode::fixed(0.0));
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.variance, variance(std::vector<double>(gp)), 1e-12);
}

TEST(CvEstimator, PerfectVariate) {
  const std::vector<double> g{1, 5, 2, 8, 3};
  const auto e = cv_estimator(g, g, 4.25, BetaMode::fixed(1.0));
  EXPECT_NEAR(e.mean, 4.25, 1e-12);
  EXPECT_NEAR(e.variance, 0.0, 1e-12);
  const auto r = cv_estimator(g, g, 4.25, BetaMode::fitted());
  EXPECT_NEAR(r.beta, 1.0, 1e-12);
}

TEST(CvEstimator, RegressionFallsBackOnConstantVariate) {
  const std::vector<double> gp{1, 2, 3}, gc{7, 7, 7};
  const auto e = cv_estimator(gp, gc, 7.0, BetaMode::fitted());
  EXPECT_EQ(e.beta, 0.0);
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  EXPECT_THROW(cv_estimator(std::vector<double>{1}, std::vector<double>{1}, 0, BetaMode::fitted()),
               std::invalid_argument);
}

TEST(CvEstimator, StiffExactPathVarianceReduction) {
  // exact paths keep the time change close to the mean field; the mixed
  // level-0 path on this model is covered by the acceptance run
  const auto net = stiff_model();
  const Mesh mesh = Mesh::uniform(1.0, 4);
  const auto mf = mean_field_solve(net, Mesh::uniform(1.0, 20000));
  MixedConfig cfg;
  cfg.force = ForcedMethod::exact;
  const int n = 60;
  std::vector<double> gp(n), gc(n);
  for (int i = 0; i < n; ++i) {
    const auto s =
        cv_pair_sample(net, net.initial_state(), mesh, cfg, mf, StreamKey{6, 0, static_cast<std::uint32_t>(i), 0});
    gp[i] = s.g_path;
    gc[i] = s.g_cv;
  }
  const auto e = cv_estimator(gp, gc, mf.mu[2], BetaMode::fixed(1.0));
  EXPECT_LE(e.variance, 0.5 * variance(gp));
}
