#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace mixedml {

// Identifies one independent random stream. Two equal keys always replay the
// same sequence; any difference in a field selects a disjoint counter space.
struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint32_t level = 0;
  std::uint32_t path_index = 0;
  std::uint32_t substream = 0;

  StreamKey with_substream(std::uint32_t s) const {
    StreamKey k = *this;
    k.substream = s;
    return k;
  }
  StreamKey with_path(std::uint32_t p) const {
    StreamKey k = *this;
    k.path_index = p;
    return k;
  }
  StreamKey with_level(std::uint32_t l) const {
    StreamKey k = *this;
    k.level = l;
    return k;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Philox4x32-10 (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace detail

// Counter-based generator over a StreamKey. Satisfies UniformRandomBitGenerator
// so the standard distributions can draw from it.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(const StreamKey& key) {
    const std::uint64_t k =
        detail::splitmix64(key.master_seed ^ detail::splitmix64(0xA5A5ULL + key.level));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    path_ = key.path_index;
    sub_ = key.substream;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (buffered_ == 0) {
      const auto out = detail::philox4x32(
          {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
           path_, sub_},
          key_);
      ++counter_;
      buffer_ = (std::uint64_t{out[1]} << 32) | out[0];
      buffered_ = 1;
      return (std::uint64_t{out[3]} << 32) | out[2];
    }
    buffered_ = 0;
    return buffer_;
  }

  // Uniform on the open interval (0,1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  // Exp(rate); rate == 0 gives +inf (the event never happens).
  double exponential(double rate) {
    if (!(rate >= 0.0)) throw std::domain_error("exponential: rate must be >= 0");
    if (rate == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform()) / rate;
  }

  // Unit-rate exponential, the internal-time residual of a Poisson clock.
  double unit_exponential() { return -std::log(uniform()); }

  // std::poisson_distribution is multiplicative below mean 12 and a
  // transformed-rejection sampler above, so large means cost O(1).
  std::int64_t poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw std::domain_error("poisson: lambda must be finite and >= 0");
    if (lambda == 0.0) return 0;
    std::poisson_distribution<std::int64_t> dist(lambda);
    return dist(*this);
  }

  std::int64_t binomial(std::int64_t n, double p) {
    if (n < 0) throw std::domain_error("binomial: n must be >= 0");
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binomial: p must lie in [0,1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    std::binomial_distribution<std::int64_t> dist(n, p);
    return dist(*this);
  }

 private:
  std::array<std::uint32_t, 2> key_{};
  std::uint32_t path_ = 0;
  std::uint32_t sub_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t buffer_ = 0;
  int buffered_ = 0;
};

}  // namespace mixedml
