#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <gtest/gtest.h>

#include "mixedml/rng.hpp"

using namespace mixedml;

TEST(Stream, DegenerateParameters) {
  Stream s(StreamKey{1, 0, 0, 0});
  EXPECT_EQ(s.poisson(0.0), 0);
  EXPECT_EQ(s.binomial(7, 1.0), 7);
  EXPECT_EQ(s.binomial(7, 0.0), 0);
  EXPECT_EQ(s.binomial(0, 0.3), 0);
  EXPECT_TRUE(std::isinf(s.exponential(0.0)));
}

TEST(Stream, InvalidParametersThrow) {
  Stream s(StreamKey{1, 0, 0, 0});
  EXPECT_THROW(s.poisson(-1.0), std::domain_error);
  EXPECT_THROW(s.poisson(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
  EXPECT_THROW(s.poisson(std::numeric_limits<double>::infinity()), std::domain_error);
  EXPECT_THROW(s.binomial(-1, 0.5), std::domain_error);
  EXPECT_THROW(s.binomial(3, 1.5), std::domain_error);
  EXPECT_THROW(s.exponential(-2.0), std::domain_error);
}

TEST(Stream, UniformOpenInterval) {
  Stream s(StreamKey{9, 1, 2, 3});
  for (int i = 0; i < 100000; ++i) {
    const double u = s.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Stream, PoissonMeanLargeSample) {
  Stream s(StreamKey{2024, 0, 0, 0});
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(s.poisson(4.0));
  // 3 standard errors of the mean: 3 * sqrt(4 / 1e6) = 0.006
  EXPECT_NEAR(sum / n, 4.0, 0.006);
}

class PoissonGoodnessOfFit : public ::testing::TestWithParam<double> {};

TEST_P(PoissonGoodnessOfFit, ChiSquare) {
  const double lambda = GetParam();
  boost::math::poisson_distribution<double> ref(lambda);
  const int n = 100000;
  // bins [0, lo) [lo] ... [hi] (hi, inf) with expected count >= 5 at each end
  int lo = 0;
  while (boost::math::cdf(ref, lo) * n < 5.0) ++lo;
  int hi = static_cast<int>(lambda);
  while (boost::math::cdf(boost::math::complement(ref, hi)) * n >= 5.0) ++hi;
  std::vector<double> observed(static_cast<std::size_t>(hi - lo + 3), 0.0);
  Stream s(StreamKey{77, 0, static_cast<std::uint32_t>(lambda * 10), 0});
  for (int i = 0; i < n; ++i) {
    const auto k = s.poisson(lambda);
    std::size_t bin;
    if (k < lo) bin = 0;
    else if (k > hi) bin = observed.size() - 1;
    else bin = static_cast<std::size_t>(k - lo + 1);
    observed[bin] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < observed.size(); ++b) {
    double p;
    if (b == 0) p = lo > 0 ? boost::math::cdf(ref, lo - 1) : 0.0;
    else if (b == observed.size() - 1) p = boost::math::cdf(boost::math::complement(ref, hi));
    else p = boost::math::pdf(ref, lo + static_cast<int>(b) - 1);
    if (p <= 0.0) continue;
    const double e = p * n;
    chi2 += (observed[b] - e) * (observed[b] - e) / e;
  }
  const double dof = static_cast<double>(observed.size()) - 1.0 - (lo > 0 ? 0.0 : 1.0);
  const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), chi2));
  EXPECT_GT(pval, 1e-3) << "chi2=" << chi2 << " dof=" << dof;
}

INSTANTIATE_TEST_SUITE_P(Means, PoissonGoodnessOfFit, ::testing::Values(0.5, 5.0, 50.0));

TEST(Stream, BinomialMeanAndVariance) {
  Stream s(StreamKey{5, 0, 0, 0});
  const int n = 200000;
  const std::int64_t trials = 40;
  const double p = 0.3;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(s.binomial(trials, p));
    sum += k;
    sq += k * k;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 12.0, 3.0 * std::sqrt(8.4 / n));
  EXPECT_NEAR(var, 8.4, 0.1);
}

TEST(Stream, ExponentialMean) {
  Stream s(StreamKey{6, 0, 0, 0});
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += s.exponential(2.5);
  EXPECT_NEAR(sum / n, 0.4, 3.0 * 0.4 / std::sqrt(n));
}

TEST(Stream, SameKeySameSequence) {
  const StreamKey key{42, 3, 17, 5};
  Stream a(key), b(key);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a(), b());
  }
  Stream c(key), d(key);
  for (int i = 0; i < 200; ++i) {
    ASSERT_EQ(c.poisson(30.0), d.poisson(30.0));
    ASSERT_EQ(c.binomial(50, 0.2), d.binomial(50, 0.2));
  }
}

TEST(Stream, DistinctKeysDiffer) {
  const StreamKey base{42, 3, 17, 5};
  std::vector<StreamKey> keys{base, base.with_substream(6), base.with_path(18), base.with_level(4),
                              StreamKey{43, 3, 17, 5}};
  std::vector<std::uint64_t> first;
  for (const auto& k : keys) {
    Stream s(k);
    first.push_back(s());
  }
  for (std::size_t i = 0; i < first.size(); ++i)
    for (std::size_t j = i + 1; j < first.size(); ++j) EXPECT_NE(first[i], first[j]) << i << " vs " << j;
}

TEST(Stream, NeighbouringStreamsUncorrelated) {
  Stream a(StreamKey{1, 0, 0, 0}), b(StreamKey{1, 0, 1, 0});
  const int n = 100000;
  double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform(), y = b.uniform();
    sa += x;
    sb += y;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double r = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  EXPECT_LT(std::abs(r), 4.0 / std::sqrt(n));
}
