#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fwe/cluster.hpp"
#include "fwe/glm.hpp"

namespace fwe {

enum class PermScheme { relabel_two_sample, sign_flip_one_sample };
enum class Tail { one_sided, two_sided };

[[nodiscard]] const char* to_string(PermScheme s) noexcept;
[[nodiscard]] const char* to_string(Tail t) noexcept;

struct PermOptions {
  std::vector<CdtSpec> cdts;  // empty: voxel inference only
  std::size_t n_resamples = 1000;
  std::uint64_t seed = 0;
  Tail tail = Tail::one_sided;
  Connectivity connectivity = Connectivity::faces6;
  unsigned threads = 1;
};

/// Max-statistic null. Resample 0 is always the identity, so the observed
/// data are part of their own null. One-sided nulls use the positive tail;
/// two-sided nulls take the larger of both tails.
struct PermNull {
  PermScheme scheme = PermScheme::relabel_two_sample;
  Tail tail = Tail::one_sided;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  double df = 0.0;
  std::vector<CdtSpec> cdts;
  std::vector<double> cdt_thresholds;  // on the t scale
  std::vector<double> max_stats_pos;   // max t
  std::vector<double> max_stats_neg;   // max -t
  std::vector<std::vector<std::uint32_t>> max_extents_pos;  // [cdt][resample]
  std::vector<std::vector<std::uint32_t>> max_extents_neg;
  Volume3 observed;  // t map of the identity resample

  [[nodiscard]] std::size_t n_resamples() const noexcept { return max_stats_pos.size(); }
  /// Tail-combined maximum statistic of resample r.
  [[nodiscard]] double max_stat(std::size_t r) const;
  /// Tail-combined maximum extent of resample r at CDT c.
  [[nodiscard]] std::uint32_t max_extent(std::size_t c, std::size_t r) const;
};

/// Two-sample relabeling null for group1 - group2.
[[nodiscard]] PermNull perm_build_null(const SubjectStack& group1, const SubjectStack& group2, const Mask& mask,
                                       const PermOptions& opt);

/// One-sample sign-flipping null.
[[nodiscard]] PermNull perm_build_null(const SubjectStack& s, const Mask& mask, const PermOptions& opt);

/// count(max_stat >= stat_value) / n.
[[nodiscard]] double perm_voxel_fwe_p(double stat_value, const PermNull& null);

/// count(max_extent >= extent) / n at CDT index c. Throws CdtMissing when
/// the null was built without that CDT.
[[nodiscard]] double perm_cluster_fwe_p(std::size_t extent, const PermNull& null, std::size_t c = 0);

/// Same against the single-tail null of the given sign.
[[nodiscard]] double perm_cluster_fwe_p_signed(std::size_t extent, const PermNull& null, std::size_t c, int sign);

/// Threshold on the t scale for a CDT at the given degrees of freedom: p
/// sources use the t quantile, z sources are matched in probability.
[[nodiscard]] double cdt_stat_threshold(const CdtSpec& cdt, double df);

/// Little-endian sidecar:
///   "FWEPRM01" | u32 version | u8 scheme | u8 tail | u16 n_cdt | u64 seed |
///   u64 n | f64 df | n_cdt x (f64 cdt p, f64 threshold) | n x f64 max t | n x f64 max -t |
///   n_cdt x (n x u32 positive extent, n x u32 negative extent)
void write_perm_null(const PermNull& null, const std::filesystem::path& path);
[[nodiscard]] PermNull read_perm_null(const std::filesystem::path& path);

}  // namespace fwe
