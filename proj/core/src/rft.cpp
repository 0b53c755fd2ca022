#include "fwe/rft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fwe/error.hpp"

namespace fwe {

namespace {

const double kFourLn2 = 4.0 * std::log(2.0);
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

MaskLattice MaskLattice::count(const Mask& mask) {
  const Grid& g = mask.grid();
  const auto f = mask.flags();
  const auto [nx, ny, nz] = g.dims;
  auto in = [&](std::size_t x, std::size_t y, std::size_t z) {
    return x < nx && y < ny && z < nz && f[g.index(x, y, z)] != 0;
  };
  MaskLattice l;
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        if (!in(x, y, z)) continue;
        l.points += 1;
        const bool ex = in(x + 1, y, z);
        const bool ey = in(x, y + 1, z);
        const bool ez = in(x, y, z + 1);
        l.edges[0] += ex;
        l.edges[1] += ey;
        l.edges[2] += ez;
        const bool fxy = ex && ey && in(x + 1, y + 1, z);
        const bool fxz = ex && ez && in(x + 1, y, z + 1);
        const bool fyz = ey && ez && in(x, y + 1, z + 1);
        l.faces[0] += fxy;
        l.faces[1] += fxz;
        l.faces[2] += fyz;
        l.cubes += fxy && fxz && fyz && in(x + 1, y + 1, z + 1);
      }
    }
  }
  return l;
}

ReselCounts MaskLattice::resels(const Spacing& voxel_mm, const std::array<double, 3>& fwhm_mm) const {
  std::array<double, 3> r{};
  for (int a = 0; a < 3; ++a) r[a] = voxel_mm[a] / fwhm_mm[a];
  const auto [ex, ey, ez] = edges;
  const auto [fxy, fxz, fyz] = faces;
  const double c = cubes;
  ReselCounts R{};
  R[0] = points - (ex + ey + ez) + (fxy + fxz + fyz) - c;
  R[1] = (ex - fxy - fxz + c) * r[0] + (ey - fxy - fyz + c) * r[1] + (ez - fxz - fyz + c) * r[2];
  R[2] = (fxy - c) * r[0] * r[1] + (fxz - c) * r[0] * r[2] + (fyz - c) * r[1] * r[2];
  R[3] = c * r[0] * r[1] * r[2];
  return R;
}

RftContext RftContext::from_mask(const Mask& mask, const SmoothnessEstimate& s, double df, FieldKind kind) {
  RftContext ctx;
  ctx.smoothness = s;
  ctx.search_volume_mm3 = mask.volume_mm3();
  ctx.df = df;
  ctx.kind = kind;
  ctx.resels = MaskLattice::count(mask).resels(mask.grid().voxel_mm, s.fwhm_mm);
  ctx.validate();
  return ctx;
}

RftContext RftContext::from_volume(const SmoothnessEstimate& s, double search_volume_mm3, double df,
                                   FieldKind kind) {
  RftContext ctx;
  ctx.smoothness = s;
  ctx.search_volume_mm3 = search_volume_mm3;
  ctx.df = df;
  ctx.kind = kind;
  ctx.resels = {1.0, 0.0, 0.0, s.resels};
  ctx.validate();
  return ctx;
}

void RftContext::validate() const {
  if (!(resels[3] > 0.0)) throw Error(Errc::invalid_argument, "resel count must be positive");
  if (!(search_volume_mm3 > 0.0)) throw Error(Errc::invalid_argument, "search volume must be positive");
  if (kind == FieldKind::student_t && !(df >= 1.0)) {
    throw Error(Errc::invalid_argument, "t fields need df >= 1");
  }
}

std::array<double, 4> ec_densities(double u, double df, FieldKind kind) {
  if (kind == FieldKind::gaussian || std::isinf(df)) {
    const double e = std::exp(-0.5 * u * u);
    return {dist::normal_sf(u), std::sqrt(kFourLn2) / kTwoPi * e,
            kFourLn2 / std::pow(kTwoPi, 1.5) * u * e,
            std::pow(kFourLn2, 1.5) / (kTwoPi * kTwoPi) * (u * u - 1.0) * e};
  }
  const double v = df;
  const double w = std::exp(-0.5 * (v - 1.0) * std::log1p(u * u / v));
  const double g = std::exp(dist::log_gamma(0.5 * (v + 1.0)) - dist::log_gamma(0.5 * v)) / std::sqrt(0.5 * v);
  return {dist::t_sf(u, v), std::sqrt(kFourLn2) / kTwoPi * w,
          kFourLn2 / std::pow(kTwoPi, 1.5) * g * u * w,
          std::pow(kFourLn2, 1.5) / (kTwoPi * kTwoPi) * ((v - 1.0) * u * u / v - 1.0) * w};
}

double expected_ec(double u, const RftContext& ctx) {
  const auto rho = ec_densities(u, ctx.df, ctx.kind);
  double ec = 0.0;
  for (int d = 0; d < 4; ++d) ec += ctx.resels[d] * rho[d];
  return ec;
}

namespace {

constexpr double kEnvelopeStep = 0.02;
constexpr double kEnvelopeTop = 6.0;

}  // namespace

double voxel_fwe_p(double stat_value, const RftContext& ctx) {
  if (std::isinf(stat_value)) return stat_value > 0 ? 0.0 : 1.0;
  if (std::isnan(stat_value)) return 1.0;
  // The EC expansion is not monotone below its mode (the rho_3 term turns
  // negative for |u| < 1), so take the upper envelope over v >= u.
  double p = expected_ec(stat_value, ctx);
  for (double v = stat_value + kEnvelopeStep; v < kEnvelopeTop && p < 1.0; v += kEnvelopeStep) {
    p = std::max(p, expected_ec(v, ctx));
  }
  return std::clamp(p, 0.0, 1.0);
}

double bonferroni_p(double stat_value, std::size_t n_voxels, double df) {
  if (n_voxels == 0) throw Error(Errc::invalid_argument, "Bonferroni needs at least one voxel");
  return std::min(1.0, static_cast<double>(n_voxels) * dist::t_sf(stat_value, df));
}

double cluster_fwe_p(std::size_t extent_voxels, const CdtSpec& cdt, const RftContext& ctx,
                     double voxel_volume_mm3) {
  ctx.validate();
  const double z = cdt.z_equivalent();
  if (z < kMinClusterCdtZ) {
    throw Error(Errc::cdt_too_low, "cluster-defining threshold z = " + std::to_string(z) + " is below 1.6");
  }
  if (extent_voxels == 0) return 1.0;

  double u = z;
  double df = dist::kInfiniteDf;
  FieldKind kind = FieldKind::gaussian;
  if (ctx.native_t_clusters && ctx.kind == FieldKind::student_t) {
    kind = FieldKind::student_t;
    df = ctx.df;
    u = cdt.p_uncorrected ? dist::t_isf(*cdt.p_uncorrected, df) : z;
  }
  const auto rho = ec_densities(u, df, kind);
  double em = 0.0;
  for (int d = 0; d < 4; ++d) em += ctx.resels[d] * rho[d];
  if (!(em > 0.0)) return 1.0;
  const double en = ctx.resels[3] * rho[0];
  const double es = en / em;
  const double beta = std::pow(std::tgamma(2.5) / es, 2.0 / 3.0);
  const auto& f = ctx.smoothness.fwhm_mm;
  const double k = static_cast<double>(extent_voxels) * voxel_volume_mm3 / (f[0] * f[1] * f[2]);
  const double p_size = std::exp(-beta * std::pow(k, 2.0 / 3.0));
  return std::clamp(-std::expm1(-em * p_size), 0.0, 1.0);
}

std::size_t rft_cluster_threshold(double target_fwe_p, const CdtSpec& cdt, const RftContext& ctx,
                                  double voxel_volume_mm3) {
  if (!(target_fwe_p > 0.0 && target_fwe_p < 1.0)) {
    throw Error(Errc::invalid_argument, "target FWE p must lie in (0, 1)");
  }
  auto p = [&](std::size_t k) { return cluster_fwe_p(k, cdt, ctx, voxel_volume_mm3); };
  if (p(1) <= target_fwe_p) return 1;
  std::size_t lo = 1;  // p(lo) > target
  std::size_t hi = 2;
  while (p(hi) > target_fwe_p) {
    lo = hi;
    if (hi > (std::size_t{1} << 40)) throw Error(Errc::invalid_argument, "no finite cluster threshold");
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (p(mid) <= target_fwe_p) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace fwe
