#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fwe/distributions.hpp"
#include "fwe/volume.hpp"

namespace fwe {

enum class Connectivity { faces6, edges18, corners26 };

[[nodiscard]] const char* to_string(Connectivity c) noexcept;
[[nodiscard]] Connectivity parse_connectivity(const std::string& name);

/// Cluster-defining threshold given either as an uncorrected p-value (with
/// the df used for the p -> t conversion) or directly as a z value.
struct CdtSpec {
  std::optional<double> p_uncorrected;
  std::optional<double> z_equivalent_value;
  double df = dist::kInfiniteDf;

  [[nodiscard]] static CdtSpec from_p(double p, double df = dist::kInfiniteDf);
  [[nodiscard]] static CdtSpec from_z(double z);

  /// Normal-scale threshold: the given z, or the normal quantile of p.
  [[nodiscard]] double z_equivalent() const;
  [[nodiscard]] double p_value() const;
  [[nodiscard]] CdtSpec with_df(double df) const;
  void validate() const;
};

/// Threshold on the statistic's own scale: z for a z source, the Student t
/// quantile of p for a p source (normal when df is infinite).
[[nodiscard]] double cdt_to_threshold(const CdtSpec& c);

struct Cluster {
  std::uint32_t id = 0;
  std::size_t size_voxels = 0;
  double size_mm3 = 0.0;
  double peak_value = 0.0;
  std::size_t peak_index = 0;
  int sign = 1;
  std::optional<double> fwe_p;
};

struct ClusterTable {
  std::vector<Cluster> clusters;
  Connectivity connectivity = Connectivity::faces6;
  double threshold_used = 0.0;
  int sign = 1;
  std::vector<std::uint32_t> labels;  // per voxel cluster id, 0 outside every cluster

  [[nodiscard]] Mask cluster_mask(const Grid& grid) const;
};

/// Connected components of {stat > threshold} (sign = +1) or
/// {stat < -threshold} (sign = -1) inside the mask. Ids are assigned by
/// descending size, then ascending peak index.
[[nodiscard]] ClusterTable label_clusters(const Volume3& stat, double threshold, const Mask& mask,
                                          Connectivity connectivity, int sign = 1);

[[nodiscard]] std::size_t max_extent(const ClusterTable& t) noexcept;

/// Allocation-free largest-cluster size for repeated queries on one mask.
class ClusterWorkspace {
 public:
  ClusterWorkspace(const Mask& mask, Connectivity connectivity);

  [[nodiscard]] std::size_t max_extent(std::span<const double> stat, double threshold, int sign = 1);

 private:
  std::uint32_t find(std::uint32_t x);

  const Mask* mask_;
  Connectivity connectivity_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::array<int, 3>> deltas_;
  std::vector<std::uint32_t> parent_;  // indexed by voxel, valid only for touched voxels
  std::vector<std::uint32_t> size_;
  std::vector<std::uint8_t> active_;
  std::vector<std::uint32_t> touched_;
};

/// CSV with columns id, size_voxels, size_mm3, peak_value, fwe_p, sign.
void write_cluster_csv(std::span<const ClusterTable> tables, const std::filesystem::path& path);

/// Neighbor offsets (dx, dy, dz) that precede a voxel in linear order.
[[nodiscard]] std::vector<std::array<int, 3>> backward_neighbors(Connectivity c);

}  // namespace fwe
