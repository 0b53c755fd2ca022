#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fwe/cluster.hpp"
#include "fwe/glm.hpp"
#include "fwe/kernel.hpp"
#include "fwe/synth.hpp"

namespace fwe {

enum class DataSource { synthetic_beta_maps, synthetic_first_level, external_nifti_stack };

enum class Backend {
  rft_voxel,
  rft_cluster,
  bonferroni_voxel,
  mc_cluster_buggy,
  mc_cluster_fixed,
  perm_voxel,
  perm_cluster,
  adhoc_extent,
};

[[nodiscard]] const char* to_string(DataSource d) noexcept;
[[nodiscard]] const char* to_string(Backend b) noexcept;
[[nodiscard]] DataSource parse_data_source(const std::string& name);
[[nodiscard]] Backend parse_backend(const std::string& name);
[[nodiscard]] bool is_cluster_backend(Backend b) noexcept;

/// Significance by an arbitrary extent: any cluster at cdt_p with at least
/// ceil(extent_mm3 / voxel volume) voxels.
struct AdhocSpec {
  double cdt_p = 0.001;
  double extent_mm3 = 80.0;
  void validate() const;
};

/// Gaussian bump in kernel width, centered in voxel coordinates.
struct NonstatSpec {
  std::array<double, 3> center_vox{};
  double radius_mm = 10.0;
  double peak_gain = 2.0;

  [[nodiscard]] std::string to_string() const;
};

struct CampaignSpec {
  DataSource data_source = DataSource::synthetic_beta_maps;
  std::size_t n_analyses = 100;
  TestKind test = TestKind::two_sample;
  std::size_t group_size = 8;
  /// Each value rescales the kernel so its first component has this FWHM.
  /// Empty means a single cell with the kernel as given.
  std::vector<double> smoothing_fwhm_mm;
  std::vector<CdtSpec> cdt{CdtSpec::from_p(0.01), CdtSpec::from_p(0.001)};
  std::vector<Backend> inference{Backend::rft_cluster};
  std::optional<ParadigmSpec> paradigm;
  KernelSpec kernel = KernelSpec::gaussian(6.0);
  std::optional<NonstatSpec> nonstat;
  double nominal_fwe = 0.05;
  std::uint64_t seed = 1;

  Grid grid = cube_grid(48, 2.0);
  std::array<double, 3> mask_semi_axes_mm{46.0, 44.0, 40.0};
  std::optional<std::filesystem::path> mask_path;
  std::size_t pool_size = 100;
  std::size_t n_resamples = 1000;
  std::size_t mc_iterations = 1000;
  Connectivity connectivity = Connectivity::faces6;
  std::optional<AdhocSpec> adhoc;

  Ar1Spec ar1{0.3, 1.0};
  std::size_t drift_order = 3;

  std::vector<std::filesystem::path> pool_paths;
  std::vector<std::filesystem::path> variance_paths;

  unsigned threads = 1;
  std::optional<std::filesystem::path> checkpoint_dir;

  void validate() const;
};

struct FweRow {
  Backend backend = Backend::rft_cluster;
  TestKind test = TestKind::two_sample;
  std::string kernel;
  std::string nonstat;
  double smoothing_fwhm_mm = 0.0;
  std::optional<double> cdt_p;
  std::size_t group_size = 0;
  std::size_t n_analyses = 0;
  std::size_t n_significant = 0;
  double fwe_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  bool failed = false;
  std::string error;
};

struct RatioRow {
  std::string dataset_tag;
  std::string contrast_tag;
  std::size_t cluster_size_voxels = 0;
  double parametric_p = 0.0;
  double nonparametric_p = 0.0;
  double ratio = 0.0;
};

struct RatioReport {
  std::vector<RatioRow> rows;
  [[nodiscard]] double median_ratio() const;
};

struct FweReport {
  std::vector<FweRow> rows;
  RatioReport ratios;

  [[nodiscard]] bool any_failed() const noexcept;
  /// First row matching backend and (for cluster backends) CDT p.
  [[nodiscard]] const FweRow* find(Backend b, std::optional<double> cdt_p = std::nullopt,
                                   std::optional<double> smoothing = std::nullopt) const;
};

/// Runs n_analyses null analyses per smoothing cell against every backend.
/// Per-analysis results are checkpointed when checkpoint_dir is set, one
/// JSON record per (cell, analysis) at cell<c>/a<i>.json; existing records
/// are reused, so an interrupted campaign resumes where it stopped.
[[nodiscard]] FweReport run_campaign(const CampaignSpec& spec);

/// Campaign with the single adhoc_extent backend.
[[nodiscard]] FweReport run_adhoc(const CampaignSpec& spec, const AdhocSpec& adhoc);

/// Parametric and nonparametric FWE p of the same cluster.
struct ClusterPPair {
  std::size_t size_voxels = 0;
  std::size_t peak_index = 0;
  int sign = 1;
  double p = 0.0;
};

/// Ratio rows for clusters whose parametric p lies in [1e-4, 0.05]. Inputs
/// must list the same clusters in the same order (MismatchedInputs otherwise).
[[nodiscard]] RatioReport compare_backends(std::span<const ClusterPPair> parametric,
                                           std::span<const ClusterPPair> nonparametric,
                                           const std::string& dataset_tag, const std::string& contrast_tag);

inline constexpr double kRatioMinParametricP = 1e-4;
inline constexpr double kRatioMaxParametricP = 0.05;

/// Exact Clopper-Pearson interval.
[[nodiscard]] std::pair<double, double> binomial_ci(std::size_t k, std::size_t n, double level = 0.95);

void write_fwe_report_csv(const FweReport& report, const std::filesystem::path& path);
[[nodiscard]] std::string fwe_report_csv(const FweReport& report);
void write_ratio_report_csv(const RatioReport& report, const std::filesystem::path& path);

}  // namespace fwe
