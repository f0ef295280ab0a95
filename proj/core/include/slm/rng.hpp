#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace slm {

/// Deterministic pseudo-random stream (splitmix64 core). All sampling code
/// in this project goes through this class so results are bit-reproducible
/// across platforms and independent of the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Derives an independent stream from a tuple of keys, e.g.
  /// {master_seed, epoch, sample_index}. Same keys, same stream.
  static Rng keyed(std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64();

  /// Uniform in [0,1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  bool bernoulli(double p);
  /// Standard normal via Box-Muller (one value per draw, no caching).
  double normal();
  /// Gamma(shape k, scale theta), Marsaglia-Tsang.
  double gamma(double k, double theta);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace slm
