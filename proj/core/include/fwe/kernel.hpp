#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fwe/volume.hpp"

namespace fwe {

/// Isotropic smoothing kernel: a single Gaussian or a weighted mixture of
/// Gaussians (the mixture produces a heavier-tailed autocorrelation).
struct KernelSpec {
  enum class Kind { gaussian, gaussian_mixture };

  Kind kind = Kind::gaussian;
  std::vector<double> fwhm_mm{6.0};
  std::vector<double> weights{1.0};

  [[nodiscard]] static KernelSpec gaussian(double fwhm_mm);
  [[nodiscard]] static KernelSpec mixture(std::vector<double> fwhm_mm, std::vector<double> weights);

  /// Parses "gaussian:6" or "mix:6,18:0.5,0.5".
  [[nodiscard]] static KernelSpec parse(std::string_view text);
  [[nodiscard]] std::string to_string() const;

  /// Same shape with every component width multiplied by `factor`.
  [[nodiscard]] KernelSpec scaled(double factor) const;

  /// Throws Error(invalid_argument) when the invariants do not hold.
  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

[[nodiscard]] double fwhm_to_sigma(double fwhm) noexcept;
[[nodiscard]] double sigma_to_fwhm(double sigma) noexcept;

/// Normalized (sum 1) discrete Gaussian sampled at integer offsets, truncated
/// at four standard deviations.
[[nodiscard]] std::vector<double> gaussian_kernel_1d(double fwhm_mm, double voxel_mm);

/// Sum of squares of the composite 3D discrete kernel: the output variance of
/// convolving unit-variance white noise away from the borders.
[[nodiscard]] double kernel_sum_of_squares(const KernelSpec& kernel, const Spacing& voxel_mm);

/// Sum over offsets of K_a * K_b for two composite kernels on the same lattice.
[[nodiscard]] double kernel_cross_product(const KernelSpec& a, const KernelSpec& b, const Spacing& voxel_mm);

enum class Rescale { none, analytic, empirical };

/// Separable convolution with zero padding at the grid edges. Mixtures are the
/// weighted sum of per-component outputs. When `support` is given, voxels
/// outside it are treated as zero input (never read) and zeroed in the output.
///
/// analytic: divide by sqrt(kernel_sum_of_squares).
/// empirical: divide by the sample standard deviation over the whole grid,
///            attenuated borders included.
[[nodiscard]] Volume3 smooth(const Volume3& v, const KernelSpec& kernel, Rescale rescale,
                             const Mask* support = nullptr);

/// In-place variant over a raw buffer; returns the divisor that was applied.
double smooth_in_place(std::vector<double>& data, const Grid& grid, const KernelSpec& kernel,
                       Rescale rescale, std::vector<double>& scratch);

}  // namespace fwe
