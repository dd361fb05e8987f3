#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace recon {

/// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
/// the standard); the distribution transforms are implemented here instead of
/// using std:: distributions so that sampled artifacts stay byte-identical
/// across standard library versions.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Unbiased uniform draw from [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  /// Standard normal via Box-Muller (no cached spare).
  double normal();

  /// Draws an index with probability weights[i] / sum(weights).
  /// Weights must be nonnegative with a positive sum.
  int sample_categorical(const std::vector<double>& weights);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from (base, tag, index). Used so that
/// per-graph / per-stage work is schedule-independent.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::uint64_t index = 0);

}  // namespace recon
