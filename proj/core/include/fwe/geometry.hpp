#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fwe/volume.hpp"

namespace fwe {

/// Spatial autocorrelation at ascending positive lags; lag 0 is implicitly 1.
struct SacfCurve {
  std::vector<double> distances_mm;
  std::vector<double> correlation;
  std::size_t n_maps = 0;
};

enum class SmoothnessSource { group_residuals, first_level_average };

[[nodiscard]] const char* to_string(SmoothnessSource s) noexcept;

struct SmoothnessEstimate {
  std::array<double, 3> fwhm_mm{};
  double resels = 0.0;
  SmoothnessSource source = SmoothnessSource::group_residuals;

  [[nodiscard]] double geometric_mean_fwhm() const;
  [[nodiscard]] static SmoothnessEstimate from_fwhm(const std::array<double, 3>& fwhm_mm, double volume_mm3,
                                                    SmoothnessSource source);
};

struct RoughnessMap {
  Volume3 roughness;          // mean gradient magnitude, mm^-1
  Volume3 inverse_roughness;  // 1 / (roughness + 1e-12) inside the mask
};

/// Masked Pearson correlation between each map and its shift along x, y and z.
/// Distances run over multiples of the smallest voxel edge up to max_lag_mm;
/// each axis uses its nearest integer voxel lag. Averaged over axes, then maps.
[[nodiscard]] SacfCurve estimate_sacf(std::span<const Volume3> maps, const Mask& mask, double max_lag_mm);

/// Least-squares fit of exp(-d^2 / (2 sigma^2)) to a curve; returns sigma in mm.
[[nodiscard]] double fit_sacf_sigma(const SacfCurve& curve);

/// Converts the width of a squared-exponential SACF to the FWHM of the kernel
/// that produced it: sigma_k = sigma / sqrt(2), fwhm = sigma_k * 2 sqrt(2 ln 2).
[[nodiscard]] double sacf_sigma_to_fwhm(double sigma_mm);
[[nodiscard]] double fwhm_to_sacf_sigma(double fwhm_mm);

void write_sacf_csv(const SacfCurve& curve, const std::filesystem::path& path);

/// Per-axis FWHM from the variance of forward differences of residuals that
/// are normalized to unit length at each voxel. White noise gives
/// h * sqrt(2 ln 2), i.e. about 2.35 mm on a 2 mm grid.
[[nodiscard]] SmoothnessEstimate estimate_fwhm_residuals(const Volume4& residuals, const Mask& mask,
                                                         const Spacing& voxel_size_mm);

/// Central-difference gradient magnitude (one-sided where a neighbor is
/// outside the mask or grid, zero where both are), averaged over maps.
[[nodiscard]] RoughnessMap roughness_map(std::span<const Volume3> maps, const Mask& mask);

/// Voxel-wise count of masks containing each voxel.
[[nodiscard]] Volume3 cluster_incidence_map(std::span<const Mask> cluster_masks);

/// Spearman rank correlation (average ranks for ties).
[[nodiscard]] double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace fwe
