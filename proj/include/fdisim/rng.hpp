#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace fdisim {

// =============================================================================
// Deterministic random number generation
// =============================================================================
//
// Every random quantity in the library is drawn through this class so that a
// (seed, stream) pair pins down the exact sequence on any platform:
//
//   * the engine is std::mt19937_64, whose output sequence is fully specified
//     by the C++ standard;
//   * the engine seed is output number `stream` of a SplitMix64 generator
//     started at `seed`, giving independent, documented sub-streams;
//   * doubles come from the top 53 bits of one engine output, uniform in
//     [0, 1) — exactly one engine call per draw;
//   * bounded integers use rejection sampling (one or more engine calls);
//   * categorical sampling uses a single [0, 1) draw and a CDF scan.
//
// Stream assignment across the library:
//   stream 0 — episode initial-condition noise (2n draws: theta then omega)
//   stream 1 — policy/critic weight initialisation
//   stream 2 — action sampling during rollout collection
//   stream 3 — minibatch shuffling inside PPO updates

namespace detail {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed;
    std::uint64_t derived = detail::splitmix64_next(s);
    for (std::uint64_t i = 0; i < stream; ++i) {
      derived = detail::splitmix64_next(s);
    }
    engine_.seed(derived);
  }

  /// One draw, uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// One draw, uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, k); exact via rejection, at least one engine call.
  std::size_t uniform_index(std::size_t k) {
    if (k == 0) {
      throw std::invalid_argument("Rng::uniform_index: k must be positive");
    }
    const std::uint64_t n = static_cast<std::uint64_t>(k);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
      x = engine_();
    }
    return static_cast<std::size_t>(x % n);
  }

  /// Sample an index from a probability vector (one uniform draw, CDF scan).
  /// Probabilities must be nonnegative and sum to ~1; any rounding deficit
  /// is absorbed by the last index.
  std::size_t categorical(std::span<const double> probs) {
    if (probs.empty()) {
      throw std::invalid_argument("Rng::categorical: empty probability vector");
    }
    const double u = uniform();
    double cdf = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      cdf += probs[i];
      if (u < cdf) {
        return i;
      }
    }
    return probs.size() - 1;
  }

  /// Fisher-Yates shuffle using uniform_index draws, back to front.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fdisim
