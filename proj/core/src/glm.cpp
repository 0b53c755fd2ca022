#include "fwe/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fwe/error.hpp"
#include "fwe/random.hpp"

namespace fwe {

namespace {

constexpr double kDegenerateRel = 1e-12;

using FrameList = std::vector<std::span<const double>>;

FrameList frames_of(const Volume4& v, std::span<const std::uint32_t> pick) {
  FrameList out;
  out.reserve(pick.size());
  for (auto t : pick) {
    if (t >= v.frames()) throw Error(Errc::invalid_argument, "subject index out of range");
    out.push_back(v.frame(t));
  }
  return out;
}

FrameList all_frames(const Volume4& v) {
  FrameList out;
  for (std::size_t t = 0; t < v.frames(); ++t) out.push_back(v.frame(t));
  return out;
}

GlmResult two_sample_impl(const Grid& grid, const FrameList& g1, const FrameList& g2, const Mask& mask) {
  require_same_dims(grid, mask.grid());
  const std::size_t n1 = g1.size();
  const std::size_t n2 = g2.size();
  if (n1 < 2 || n2 < 2) throw Error(Errc::too_few_subjects, "two-sample test needs at least 2 per group");
  const std::size_t nv = grid.size();
  const double dn1 = static_cast<double>(n1);
  const double dn2 = static_cast<double>(n2);
  const double df = dn1 + dn2 - 2.0;
  const double scale = 1.0 / dn1 + 1.0 / dn2;

  std::vector<double> stat(nv, 0.0);
  std::vector<double> beta(nv, 0.0);
  std::vector<double> resid((n1 + n2) * nv, 0.0);
  std::vector<std::uint32_t> degenerate;

  for (auto i : mask.indices()) {
    double s1 = 0.0;
    double s2 = 0.0;
    double raw = 0.0;
    for (const auto& f : g1) { s1 += f[i]; raw += f[i] * f[i]; }
    for (const auto& f : g2) { s2 += f[i]; raw += f[i] * f[i]; }
    const double m1 = s1 / dn1;
    const double m2 = s2 / dn2;
    const double grand = (s1 + s2) / (dn1 + dn2);
    double ss_within = 0.0;
    double ss_total = 0.0;
    for (std::size_t k = 0; k < n1; ++k) {
      const double r = g1[k][i] - m1;
      resid[k * nv + i] = r;
      ss_within += r * r;
      const double c = g1[k][i] - grand;
      ss_total += c * c;
    }
    for (std::size_t k = 0; k < n2; ++k) {
      const double r = g2[k][i] - m2;
      resid[(n1 + k) * nv + i] = r;
      ss_within += r * r;
      const double c = g2[k][i] - grand;
      ss_total += c * c;
    }
    beta[i] = m1 - m2;
    if (ss_within <= kDegenerateRel * ss_total || ss_total <= kDegenerateRel * raw) {
      degenerate.push_back(i);
      continue;
    }
    stat[i] = (m1 - m2) / std::sqrt(ss_within / df * scale);
  }
  return {Volume3(grid, std::move(stat)), df, Volume4(grid, n1 + n2, std::move(resid)),
          Volume3(grid, std::move(beta)), TestKind::two_sample, std::move(degenerate)};
}

}  // namespace

void SubjectStack::validate() const {
  if (betas.frames() < 2) throw Error(Errc::too_few_subjects, "need at least 2 subjects");
  if (variances) {
    require_same_dims(betas.grid(), variances->grid());
    if (variances->frames() != betas.frames()) {
      throw Error(Errc::mismatched_inputs, "variance maps do not align with beta maps");
    }
    for (double v : variances->data()) {
      if (v < 0.0 || std::isnan(v)) throw Error(Errc::invalid_argument, "variance maps must be nonnegative");
    }
  }
}

const char* to_string(TestKind kind) noexcept {
  switch (kind) {
    case TestKind::one_sample: return "one_sample";
    case TestKind::two_sample: return "two_sample";
    case TestKind::mema: return "mema";
  }
  return "?";
}

TestKind parse_test_kind(const std::string& name) {
  if (name == "one_sample") return TestKind::one_sample;
  if (name == "two_sample") return TestKind::two_sample;
  if (name == "mema") return TestKind::mema;
  throw Error(Errc::invalid_argument, "unknown test '" + name + "'");
}

GlmResult one_sample_t(const SubjectStack& s, const Mask& mask) {
  if (s.n_subjects() < 2) throw Error(Errc::too_few_subjects, "one-sample test needs at least 2 subjects");
  const Grid& grid = s.betas.grid();
  require_same_dims(grid, mask.grid());
  const auto frames = all_frames(s.betas);
  const std::size_t n = frames.size();
  const std::size_t nv = grid.size();
  const double dn = static_cast<double>(n);

  std::vector<double> stat(nv, 0.0);
  std::vector<double> beta(nv, 0.0);
  std::vector<double> resid(n * nv, 0.0);
  std::vector<std::uint32_t> degenerate;

  for (auto i : mask.indices()) {
    double sum = 0.0;
    double raw = 0.0;
    for (const auto& f : frames) { sum += f[i]; raw += f[i] * f[i]; }
    const double mean = sum / dn;
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double r = frames[k][i] - mean;
      resid[k * nv + i] = r;
      ss += r * r;
    }
    beta[i] = mean;
    if (ss <= kDegenerateRel * raw) {
      degenerate.push_back(i);
      continue;
    }
    const double sd = std::sqrt(ss / (dn - 1.0));
    stat[i] = mean / (sd / std::sqrt(dn));
  }
  return {Volume3(grid, std::move(stat)), dn - 1.0, Volume4(grid, n, std::move(resid)),
          Volume3(grid, std::move(beta)), TestKind::one_sample, std::move(degenerate)};
}

GlmResult two_sample_t(const SubjectStack& s1, const SubjectStack& s2, const Mask& mask) {
  require_same_dims(s1.betas.grid(), s2.betas.grid());
  return two_sample_impl(s1.betas.grid(), all_frames(s1.betas), all_frames(s2.betas), mask);
}

GlmResult two_sample_t(const SubjectStack& s, std::span<const std::uint32_t> group1,
                       std::span<const std::uint32_t> group2, const Mask& mask) {
  return two_sample_impl(s.betas.grid(), frames_of(s.betas, group1), frames_of(s.betas, group2), mask);
}

namespace {

struct MemaVoxel {
  double sigma2 = 0.0;
  double effect = 0.0;
  double stat = 0.0;
  bool degenerate = false;
};

MemaVoxel mema_voxel(const std::vector<std::span<const double>>& b, const std::vector<std::span<const double>>& v,
                     std::size_t i) {
  const std::size_t n = b.size();
  const double dn = static_cast<double>(n);
  double sum = 0.0;
  double vsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum += b[k][i];
    vsum += v[k][i];
  }
  const double mean = sum / dn;
  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) ss += (b[k][i] - mean) * (b[k][i] - mean);
  MemaVoxel out;
  out.sigma2 = std::max(0.0, ss / (dn - 1.0) - vsum / dn);
  double sw = 0.0;
  double swb = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double total = out.sigma2 + v[k][i];
    if (!(total > 0.0)) {
      out.degenerate = true;
      return out;
    }
    const double w = 1.0 / total;
    sw += w;
    swb += w * b[k][i];
  }
  out.effect = swb / sw;
  out.stat = out.effect * std::sqrt(sw);
  return out;
}

void require_variances(const SubjectStack& s, const Mask& mask) {
  if (!s.variances) throw Error(Errc::missing_variances, "mixed-effects test needs variance maps");
  if (s.n_subjects() < 3) throw Error(Errc::too_few_subjects, "mixed-effects test needs at least 3 subjects");
  s.validate();
  require_same_dims(s.betas.grid(), mask.grid());
}

}  // namespace

GlmResult mema_t(const SubjectStack& s, const Mask& mask) {
  require_variances(s, mask);
  const Grid& grid = s.betas.grid();
  const auto b = all_frames(s.betas);
  const auto v = all_frames(*s.variances);
  const std::size_t n = b.size();
  const std::size_t nv = grid.size();

  std::vector<double> stat(nv, 0.0);
  std::vector<double> beta(nv, 0.0);
  std::vector<double> resid(n * nv, 0.0);
  std::vector<std::uint32_t> degenerate;
  for (auto i : mask.indices()) {
    const auto r = mema_voxel(b, v, i);
    if (r.degenerate) {
      degenerate.push_back(i);
      continue;
    }
    stat[i] = r.stat;
    beta[i] = r.effect;
    for (std::size_t k = 0; k < n; ++k) resid[k * nv + i] = b[k][i] - r.effect;
  }
  return {Volume3(grid, std::move(stat)), static_cast<double>(n) - 1.0, Volume4(grid, n, std::move(resid)),
          Volume3(grid, std::move(beta)), TestKind::mema, std::move(degenerate)};
}

Volume3 mema_between_variance(const SubjectStack& s, const Mask& mask) {
  require_variances(s, mask);
  const auto b = all_frames(s.betas);
  const auto v = all_frames(*s.variances);
  std::vector<double> out(s.betas.grid().size(), 0.0);
  for (auto i : mask.indices()) out[i] = mema_voxel(b, v, i).sigma2;
  return Volume3(s.betas.grid(), std::move(out));
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> random_split(std::size_t n_total,
                                                                               std::size_t group_size,
                                                                               std::uint64_t seed) {
  if (group_size == 0) throw Error(Errc::invalid_argument, "group size must be positive");
  if (2 * group_size > n_total) {
    throw Error(Errc::group_too_large, "two groups of " + std::to_string(group_size) + " need more than " +
                                           std::to_string(n_total) + " subjects");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(n_total);
  std::vector<std::uint32_t> g1(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(group_size));
  std::vector<std::uint32_t> g2(perm.begin() + static_cast<std::ptrdiff_t>(group_size),
                                perm.begin() + static_cast<std::ptrdiff_t>(2 * group_size));
  return {std::move(g1), std::move(g2)};
}

double log_n_choose_k(std::size_t n, std::size_t k) {
  if (k > n) throw Error(Errc::invalid_argument, "k exceeds n");
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

SubjectStack select_subjects(const SubjectStack& s, std::span<const std::uint32_t> frames) {
  const Grid& grid = s.betas.grid();
  auto gather = [&](const Volume4& v) {
    std::vector<double> data;
    data.reserve(frames.size() * grid.size());
    for (auto t : frames) {
      if (t >= v.frames()) throw Error(Errc::invalid_argument, "subject index out of range");
      auto f = v.frame(t);
      data.insert(data.end(), f.begin(), f.end());
    }
    return Volume4(grid, frames.size(), std::move(data));
  };
  SubjectStack out{gather(s.betas), std::nullopt};
  if (s.variances) out.variances = gather(*s.variances);
  return out;
}

}  // namespace fwe
