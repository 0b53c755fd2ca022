#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fwe/cluster.hpp"
#include "fwe/geometry.hpp"
#include "fwe/kernel.hpp"

namespace fwe {

/// buggy: zero-padded smoothing divided by the empirical whole-grid standard
/// deviation. fixed: the same smoothing divided by the analytic kernel norm.
enum class McMode { buggy_empirical_rescale, fixed_analytic_rescale };

[[nodiscard]] const char* to_string(McMode m) noexcept;

/// Simulated null distribution of the largest cluster extent.
struct McNull {
  std::vector<std::uint32_t> extents;  // one per iteration
  McMode mode = McMode::fixed_analytic_rescale;
  KernelSpec kernel;
  double cdt_z = 0.0;
  Connectivity connectivity = Connectivity::faces6;

  [[nodiscard]] std::size_t n_iterations() const noexcept { return extents.size(); }
  /// counts[s] = number of iterations whose largest cluster had s voxels.
  [[nodiscard]] std::vector<std::uint64_t> histogram() const;
  /// Number of iterations with largest cluster >= extent.
  [[nodiscard]] std::size_t count_at_least(std::size_t extent) const noexcept;
};

struct McOptions {
  Connectivity connectivity = Connectivity::faces6;
  std::size_t n_iterations = 1000;
  McMode mode = McMode::fixed_analytic_rescale;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Each iteration draws white noise from derive_seed(seed, {iteration}),
/// smooths it, thresholds it at cdt_z inside the mask and keeps the largest
/// cluster size.
[[nodiscard]] McNull mc_build_null(const Mask& mask, const KernelSpec& kernel, double cdt_z, const McOptions& opt);

/// Smallest extent s >= 1 with count(extent >= s) / n <= target.
[[nodiscard]] std::size_t mc_extent_threshold(const McNull& null, double target_fwe_p);

/// (1 + count(extent_i >= extent)) / (n + 1).
[[nodiscard]] double mc_cluster_fwe_p(std::size_t extent_voxels, const McNull& null);

/// Isotropic Gaussian kernel at the geometric-mean FWHM of an estimate.
[[nodiscard]] KernelSpec kernel_from_smoothness(const SmoothnessEstimate& s);

/// Little-endian sidecar:
///   "FWEMCN01" | u32 version | u8 mode | u8 connectivity | u16 n_components |
///   f64 cdt_z | n_components x (f64 fwhm_mm, f64 weight) | u64 n |
///   n x u32 extent
void write_mc_null(const McNull& null, const std::filesystem::path& path);
[[nodiscard]] McNull read_mc_null(const std::filesystem::path& path);

}  // namespace fwe
