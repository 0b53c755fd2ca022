#pragma once

#include <limits>
#include <utility>

namespace fwe::dist {

inline constexpr double kInfiniteDf = std::numeric_limits<double>::infinity();

[[nodiscard]] double normal_cdf(double z);
/// Upper tail P(Z > z).
[[nodiscard]] double normal_sf(double z);
/// z with P(Z > z) = p.
[[nodiscard]] double normal_isf(double p);

/// Student t upper tail; an infinite df falls back to the normal.
[[nodiscard]] double t_sf(double t, double df);
[[nodiscard]] double t_isf(double p, double df);

/// Probability-matched z for a t value: normal_isf(t_sf(t, df)), evaluated
/// without underflow for large t.
[[nodiscard]] double z_from_t(double t, double df);

/// Exact (Clopper-Pearson) two-sided binomial interval at the given level.
[[nodiscard]] std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level);

[[nodiscard]] double log_gamma(double x);

}  // namespace fwe::dist
