#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace gimkit::rng {

// splitmix64 finalizer; good avalanche, used only for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent substream seed from a master seed, a stream tag and
/// an index.  Work unit k of stream `tag` always gets the same seed no matter
/// how the work is scheduled, which is what makes results thread-count
/// invariant.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return mix64(mix64(master ^ mix64(tag)) + index);
}

// Stream tags used throughout the project.  Each (tag, index) pair names one
// reproducible work unit.
enum StreamTag : std::uint64_t {
  kBootstrapReplicate = 1,
  kDatasetReplication = 2,
  kBootstrapMaster = 3,
  kStdErrBootstrap = 4,
  kPercentileBootstrap = 5,
  kRestart = 6,
  kHeldDataset = 7,
};

/// Deterministic random engine.  std::mt19937_64 output is fully specified by
/// the standard; the distribution transforms below are hand-rolled because the
/// <random> distribution classes are implementation-defined and would break
/// bit-reproducibility across standard libraries.
class Engine {
 public:
  explicit Engine(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in {0,...,n-1} by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::domain_error("below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  /// Standard normal via the Marsaglia polar method (second deviate cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Normal truncated by rejection to (lo, hi].
  double truncated_normal(double mean, double sd, double lo, double hi) {
    for (int tries = 0; tries < 100000; ++tries) {
      const double x = normal(mean, sd);
      if (x > lo && x <= hi) return x;
    }
    throw std::domain_error("truncated_normal: acceptance region too small");
  }

  double cauchy(double loc, double scale) {
    // Inverse-CDF; u=1/2 maps to the location.
    return loc + scale * std::tan(M_PI * (uniform01() - 0.5));
  }

  double exponential() { return -std::log1p(-uniform01()); }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 handled with the usual
  /// power boost.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::domain_error("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double bernoulli(double p) { return uniform01() < p ? 1.0 : 0.0; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Counts of n independent uniform draws over {0,...,n-1}; the multinomial
/// Mult_n(1/n,...,1/n) bootstrap weight vector.
inline std::vector<int> multinomial_counts(Engine& eng, int n) {
  if (n < 1) throw std::domain_error("multinomial_counts: n must be >= 1");
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) counts[eng.below(static_cast<std::uint64_t>(n))]++;
  return counts;
}

}  // namespace gimkit::rng
