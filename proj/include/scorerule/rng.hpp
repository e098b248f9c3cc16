#pragma once

#include <cstdint>

#include <boost/math/distributions/normal.hpp>

namespace scorerule {

/// SplitMix64 pseudo-random generator (Steele, Lea & Flood 2014).
///
/// Chosen over std engines because its stream is fully specified by the
/// algorithm, so seeded draws are identical across standard libraries and
/// runs of one build.  Normal variates use the inverse-CDF method so the
/// mapping uniform -> normal is deterministic too.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0,1), never exactly 0 or 1.
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [0,1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via inverse CDF.
  double next_normal() {
    static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
    return boost::math::quantile(std_normal, next_open01());
  }

  bool next_bernoulli(double prob) { return next_unit() < prob; }

  /// Derives an independent stream seed; used for per-replication seeding.
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    Rng mixer(master ^ (index * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL));
    return mixer.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace scorerule
