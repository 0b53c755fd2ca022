#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace fwe {

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based seed splitting: the result depends only on `base` and the
/// key path, so any unit of work can recreate its stream without knowing how
/// work was scheduled.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept;

/// Deterministic random stream. Distributions come from Boost.Random, whose
/// algorithms are fixed across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  [[nodiscard]] double gaussian();
  [[nodiscard]] double uniform();                          // [0, 1)
  [[nodiscard]] double uniform(double lo, double hi);      // [lo, hi]
  [[nodiscard]] std::uint64_t below(std::uint64_t n);      // [0, n)
  [[nodiscard]] bool coin();

  void fill_gaussian(std::span<double> out);

  /// Uniformly random permutation of 0..n-1 (Fisher-Yates).
  [[nodiscard]] std::vector<std::uint32_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace fwe
