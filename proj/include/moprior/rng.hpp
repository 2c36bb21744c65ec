#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace moprior {

// Deterministic, compiler-independent RNG. std::normal_distribution is
// implementation-defined, so all randomized operations in the library go
// through this class to keep seeds portable and outputs bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that small seeds do not produce correlated first draws.
    next_u64();
    next_u64();
  }

  // splitmix64 step.
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is < 2^-40 for the n used here (well under a million).
    return n == 0 ? 0 : next_u64() % n;
  }

  // Standard normal via the polar method (deterministic, no cached state
  // across calls so interleavings cannot change results).
  double gaussian() {
    for (;;) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream, e.g. one per joint or per window, so that
  // parallel workers never share RNG state.
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (0xA0761D6478BD642Full * (stream + 1)));
    return r;
  }

 private:
  std::uint64_t state_;
};

// Sample `count` distinct indices from [0, n), in increasing order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                           std::size_t count) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(count < n ? count : n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace moprior
