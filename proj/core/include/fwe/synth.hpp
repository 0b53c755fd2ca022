#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fwe/kernel.hpp"
#include "fwe/volume.hpp"

namespace fwe {

/// I.i.d. standard normal voxels; a pure function of (grid, seed).
[[nodiscard]] Volume3 gaussian_volume(const Grid& grid, std::uint64_t seed);

/// Strictly positive per-voxel multiplier applied to the kernel width.
struct NonstationarityField {
  Volume3 gain;

  /// gain(x) = 1 + (peak - 1) * exp(-|x - c|^2 / (2 r^2)), c in voxel coordinates.
  [[nodiscard]] static NonstationarityField blob(const Grid& grid, const std::array<double, 3>& center_vox,
                                                 double radius_mm, double peak_gain);
  void validate(const Mask& mask) const;
};

/// Zero-mean, unit-variance correlated null field (zero outside `mask`).
/// Without `nonstat` this is smooth(gaussian_volume(seed), kernel, analytic).
/// With it, two fields smoothed at the minimum and maximum gain from the same
/// white noise are blended voxel-wise with weight (g - gmin)/(gmax - gmin) and
/// renormalized by their analytic correlation, so the local kernel width
/// tracks the gain.
[[nodiscard]] Volume3 synth_null_subject(const Grid& grid, const KernelSpec& kernel, const Mask& mask,
                                         const NonstationarityField* nonstat, std::uint64_t seed);

// ---------------------------------------------------------------------------
// First-level simulation
// ---------------------------------------------------------------------------

/// Block (B1, B2) and event-related (E1, E2) paradigms. E2 draws each
/// activity and rest duration uniformly from its range.
struct ParadigmSpec {
  enum class Kind { B1, B2, E1, E2 };

  Kind kind = Kind::B1;
  double activity_s = 10.0;
  double rest_s = 10.0;
  double activity_max_s = 10.0;  // E2 only
  double rest_max_s = 10.0;      // E2 only
  double tr_s = 2.0;
  std::size_t n_frames = 100;

  /// Durations for the four standard paradigms: B1 10/10, B2 30/30, E1 2/6,
  /// E2 randomized 1-4 / 3-6 seconds.
  [[nodiscard]] static ParadigmSpec standard(Kind kind, double tr_s, std::size_t n_frames);
  [[nodiscard]] static Kind parse_kind(const std::string& name);
  void validate() const;
};

[[nodiscard]] std::string to_string(ParadigmSpec::Kind kind);

/// Canonical double-gamma response: gamma(6) - gamma(16)/6, unit time scale.
[[nodiscard]] double canonical_hrf(double t_s);

/// Boxcar sampled at TR after convolution with the canonical response; mean-centered.
[[nodiscard]] std::vector<double> paradigm_regressor(const ParadigmSpec& p, std::uint64_t seed);

/// Stationary AR(1) noise: x_t = rho x_{t-1} + e_t, e_t ~ N(0, sigma^2).
struct Ar1Spec {
  double rho = 0.0;
  double sigma = 1.0;
  void validate() const;
};

struct FirstLevelSpec {
  Ar1Spec noise;
  ParadigmSpec paradigm;
  std::size_t drift_order = 3;     // Legendre polynomials 0..drift_order
  double activation = 0.0;         // amplitude added on top of the smoothed noise
};

struct FirstLevelResult {
  Volume3 beta;      // paradigm regressor coefficient
  Volume3 variance;  // sigma_hat^2 * [(X'X)^-1]_00
};

/// Simulates an AR(1) time series per voxel, smooths every frame with
/// `kernel` (analytic rescale), adds activation * regressor, and fits the
/// paradigm plus polynomial drift by OLS without prewhitening.
[[nodiscard]] FirstLevelResult first_level(const FirstLevelSpec& spec, const Grid& grid, const KernelSpec& kernel,
                                           const Mask& mask, std::uint64_t seed);

[[nodiscard]] Volume3 first_level_beta(const FirstLevelSpec& spec, const Grid& grid, const KernelSpec& kernel,
                                       const Mask& mask, std::uint64_t seed);

/// Legendre polynomial P_order evaluated at x in [-1, 1].
[[nodiscard]] double legendre(std::size_t order, double x);

}  // namespace fwe
