#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fwe/volume.hpp"

namespace fwe {

/// One frame per subject. Variance maps are only needed by mema_t.
struct SubjectStack {
  Volume4 betas;
  std::optional<Volume4> variances;

  [[nodiscard]] std::size_t n_subjects() const noexcept { return betas.frames(); }
  void validate() const;
};

enum class TestKind { one_sample, two_sample, mema };

[[nodiscard]] const char* to_string(TestKind kind) noexcept;
[[nodiscard]] TestKind parse_test_kind(const std::string& name);

struct GlmResult {
  Volume3 stat;
  double df = 0.0;
  Volume4 residuals;  // one frame per subject, group 1 first for two-sample
  Volume3 beta;       // mean, mean difference, or weighted effect
  TestKind kind = TestKind::one_sample;
  std::vector<std::uint32_t> degenerate;  // zero-variance voxels, stat set to 0
};

/// t = mean / (sd / sqrt(n)), df = n - 1.
[[nodiscard]] GlmResult one_sample_t(const SubjectStack& s, const Mask& mask);

/// Pooled-variance t for group1 - group2, df = n1 + n2 - 2.
[[nodiscard]] GlmResult two_sample_t(const SubjectStack& s1, const SubjectStack& s2, const Mask& mask);

/// Same test with both groups drawn from one stack by frame index.
[[nodiscard]] GlmResult two_sample_t(const SubjectStack& s, std::span<const std::uint32_t> group1,
                                     std::span<const std::uint32_t> group2, const Mask& mask);

/// Method-of-moments mixed effects: sigma2_btw = max(0, var(b) - mean(v)),
/// w_i = 1 / (sigma2_btw + v_i), stat = sum(w b) / sum(w) * sqrt(sum(w)).
/// The stat is referred to the standard normal; df records n - 1.
[[nodiscard]] GlmResult mema_t(const SubjectStack& s, const Mask& mask);

/// Per-voxel between-subject variance estimate used by mema_t (0 outside mask).
[[nodiscard]] Volume3 mema_between_variance(const SubjectStack& s, const Mask& mask);

/// Random permutation of [0, n_total); the first group_size entries form
/// group 1 and the next group_size form group 2.
[[nodiscard]] std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> random_split(
    std::size_t n_total, std::size_t group_size, std::uint64_t seed);

/// Natural log of the binomial coefficient.
[[nodiscard]] double log_n_choose_k(std::size_t n, std::size_t k);

/// Builds a stack from selected frames of another.
[[nodiscard]] SubjectStack select_subjects(const SubjectStack& s, std::span<const std::uint32_t> frames);

}  // namespace fwe
