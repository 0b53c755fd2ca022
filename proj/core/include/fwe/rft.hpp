#pragma once

#include <array>
#include <cstddef>

#include "fwe/cluster.hpp"
#include "fwe/geometry.hpp"

namespace fwe {

enum class FieldKind { gaussian, student_t };

/// Intrinsic volumes of the search region in resel units, R0 (Euler
/// characteristic) to R3.
using ReselCounts = std::array<double, 4>;

/// Lattice element counts of a mask: points, edges, faces and cubes.
struct MaskLattice {
  double points = 0.0;
  std::array<double, 3> edges{};  // along x, y, z
  std::array<double, 3> faces{};  // xy, xz, yz
  double cubes = 0.0;

  [[nodiscard]] static MaskLattice count(const Mask& mask);
  [[nodiscard]] ReselCounts resels(const Spacing& voxel_mm, const std::array<double, 3>& fwhm_mm) const;
};

struct RftContext {
  SmoothnessEstimate smoothness;
  double search_volume_mm3 = 0.0;
  double df = dist::kInfiniteDf;
  FieldKind kind = FieldKind::gaussian;
  ReselCounts resels{};
  /// Cluster inference uses probability-matched z thresholds unless this is
  /// set, in which case a student_t context uses the t EC densities directly.
  bool native_t_clusters = false;

  /// Resel counts from the mask lattice (boundary terms included).
  [[nodiscard]] static RftContext from_mask(const Mask& mask, const SmoothnessEstimate& s, double df,
                                            FieldKind kind);
  /// Volume-only resel counts: R = {1, 0, 0, smoothness.resels}.
  [[nodiscard]] static RftContext from_volume(const SmoothnessEstimate& s, double search_volume_mm3, double df,
                                              FieldKind kind);
  void validate() const;
};

/// EC densities rho_0..rho_3 at threshold u (per resel).
[[nodiscard]] std::array<double, 4> ec_densities(double u, double df, FieldKind kind);

[[nodiscard]] double expected_ec(double u, const RftContext& ctx);

/// min(1, expected EC above stat_value), made nonincreasing in stat_value.
[[nodiscard]] double voxel_fwe_p(double stat_value, const RftContext& ctx);

/// min(1, n_voxels * upper tail); df infinite means a z statistic.
[[nodiscard]] double bonferroni_p(double stat_value, std::size_t n_voxels, double df);

/// FWE p for a cluster of extent_voxels formed at the CDT:
/// 1 - exp(-E[clusters] * P(S >= s)), with the s^(2/3) exponential size law.
/// Throws CdtTooLow below z = 1.6.
[[nodiscard]] double cluster_fwe_p(std::size_t extent_voxels, const CdtSpec& cdt, const RftContext& ctx,
                                   double voxel_volume_mm3);

/// Smallest extent whose cluster_fwe_p is at most target.
[[nodiscard]] std::size_t rft_cluster_threshold(double target_fwe_p, const CdtSpec& cdt, const RftContext& ctx,
                                                double voxel_volume_mm3);

inline constexpr double kMinClusterCdtZ = 1.6;

}  // namespace fwe
