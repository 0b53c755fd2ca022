#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fwe/cluster.hpp"
#include "fwe/distributions.hpp"
#include "fwe/geometry.hpp"
#include "fwe/rft.hpp"
#include "fwe/synth.hpp"
#include "support.hpp"

using namespace fwe;

namespace {

const double kA = 4.0 * std::log(2.0);
const double kPi = std::numbers::pi;

// EC densities via probabilists' Hermite polynomials He_{d-1}(u).
std::array<double, 4> hermite_gaussian_rho(double u) {
  const double phi = std::exp(-u * u / 2.0);
  const double he[3] = {1.0, u, u * u - 1.0};
  std::array<double, 4> r{0.5 * std::erfc(u / std::sqrt(2.0)), 0, 0, 0};
  for (int d = 1; d <= 3; ++d) r[d] = std::pow(kA, d / 2.0) / std::pow(2 * kPi, (d + 1) / 2.0) * he[d - 1] * phi;
  return r;
}

Mask box_mask(const Grid& g, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> hi) {
  std::vector<std::uint8_t> f(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = g.coords(i);
    f[i] = c[0] >= lo[0] && c[0] < hi[0] && c[1] >= lo[1] && c[1] < hi[1] && c[2] >= lo[2] && c[2] < hi[2];
  }
  return Mask(g, std::move(f));
}

Mask interior(const Grid& g, std::size_t margin) {
  return box_mask(g, {margin, margin, margin}, {g.dims[0] - margin, g.dims[1] - margin, g.dims[2] - margin});
}

RftContext box_context(double fwhm, std::size_t side, double df = dist::kInfiniteDf,
                       FieldKind kind = FieldKind::gaussian) {
  const Grid g = cube_grid(side, 2.0);
  const Mask m = Mask::full(g);
  return RftContext::from_mask(m, SmoothnessEstimate::from_fwhm({fwhm, fwhm, fwhm}, m.volume_mm3(),
                                                                SmoothnessSource::group_residuals),
                               df, kind);
}

}  // namespace

TEST_CASE("lattice resels of a box") {
  const Grid g{{9, 7, 6}, {2.0, 3.0, 2.5}};
  const Mask m = box_mask(g, {1, 1, 1}, {8, 6, 5});  // 7 x 5 x 4 voxels
  const std::array<double, 3> f{8.0, 9.0, 10.0};
  const auto R = MaskLattice::count(m).resels(g.voxel_mm, f);
  const double rx = 2.0 / 8.0, ry = 3.0 / 9.0, rz = 2.5 / 10.0;
  CHECK(R[0] == doctest::Approx(1.0));
  CHECK(R[1] == doctest::Approx(6 * rx + 4 * ry + 3 * rz));
  CHECK(R[2] == doctest::Approx(6 * 4 * rx * ry + 6 * 3 * rx * rz + 4 * 3 * ry * rz));
  CHECK(R[3] == doctest::Approx(6 * 4 * 3 * rx * ry * rz));
}

TEST_CASE("R0 is the Euler characteristic of the mask") {
  const Grid g = cube_grid(12, 2.0);
  const auto solid = make_ellipsoid_mask(g.dims, g.voxel_mm, {10, 9, 8});
  CHECK(MaskLattice::count(solid).resels(g.voxel_mm, {6, 6, 6})[0] == doctest::Approx(1.0));
  // Two disjoint boxes.
  std::vector<std::uint8_t> f(g.size(), 0);
  const auto a = box_mask(g, {0, 0, 0}, {4, 4, 4});
  const auto b = box_mask(g, {6, 6, 6}, {11, 11, 11});
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = a.inside(i) || b.inside(i);
  CHECK(MaskLattice::count(Mask(g, f)).resels(g.voxel_mm, {6, 6, 6})[0] == doctest::Approx(2.0));
  // Hollow box: shell around a one-voxel cavity has Euler characteristic 2.
  auto shell = box_mask(g, {2, 2, 2}, {7, 7, 7});
  std::vector<std::uint8_t> s(shell.flags().begin(), shell.flags().end());
  s[g.index(4, 4, 4)] = 0;
  CHECK(MaskLattice::count(Mask(g, s)).resels(g.voxel_mm, {6, 6, 6})[0] == doctest::Approx(2.0));
}

TEST_CASE("Gaussian EC densities match the Hermite form") {
  for (double u = -1.0; u <= 6.0; u += 0.25) {
    const auto a = ec_densities(u, dist::kInfiniteDf, FieldKind::gaussian);
    const auto b = hermite_gaussian_rho(u);
    for (int d = 0; d < 4; ++d) CHECK(a[d] == doctest::Approx(b[d]).epsilon(1e-12).scale(1e-300));
  }
}

TEST_CASE("Student t EC densities") {
  SUBCASE("large df converges to Gaussian") {
    for (double u = 1.0; u <= 5.0; u += 0.5) {
      const auto t = ec_densities(u, 1e6, FieldKind::student_t);
      const auto z = ec_densities(u, dist::kInfiniteDf, FieldKind::gaussian);
      for (int d = 0; d < 4; ++d) CHECK(std::abs(t[d] - z[d]) < 1e-6);
    }
  }
  SUBCASE("closed forms at df = 10") {
    const double v = 10.0;
    const double u = 3.0;
    const double base = std::pow(1 + u * u / v, -(v - 1) / 2);
    const auto r = ec_densities(u, v, FieldKind::student_t);
    CHECK(r[0] == doctest::Approx(dist::t_sf(u, v)).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(std::sqrt(kA) / (2 * kPi) * base).epsilon(1e-12));
    const double g = std::tgamma((v + 1) / 2) / (std::sqrt(v / 2) * std::tgamma(v / 2));
    CHECK(r[2] == doctest::Approx(kA / std::pow(2 * kPi, 1.5) * g * u * base).epsilon(1e-12));
    CHECK(r[3] == doctest::Approx(std::pow(kA, 1.5) / (4 * kPi * kPi) * ((v - 1) * u * u / v - 1) * base).epsilon(1e-12));
  }
}

TEST_CASE("voxel FWE p") {
  const auto ctx = box_context(8.0, 30);
  double prev = 1.0;
  for (double u = -2.0; u <= 8.0; u += 0.05) {
    const double p = voxel_fwe_p(u, ctx);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p <= prev);
    prev = p;
  }
  CHECK(voxel_fwe_p(std::numeric_limits<double>::infinity(), ctx) == 0.0);
  CHECK(voxel_fwe_p(20.0, ctx) < 1e-80);
  CHECK(voxel_fwe_p(0.0, ctx) == 1.0);

  SUBCASE("doubling resels doubles small p") {
    RftContext twice = ctx;
    for (auto& r : twice.resels) r *= 2.0;
    for (double u : {4.5, 5.0, 5.5}) CHECK(voxel_fwe_p(u, twice) == doctest::Approx(2.0 * voxel_fwe_p(u, ctx)).epsilon(0.01));
  }
  SUBCASE("Bonferroni") {
    CHECK(bonferroni_p(2.0, 1, 12.0) == doctest::Approx(dist::t_sf(2.0, 12.0)));
    CHECK(bonferroni_p(0.0, 1000, 12.0) == 1.0);
    CHECK_ERRC(bonferroni_p(2.0, 0, 12.0), Errc::invalid_argument);
    const std::size_t n = 30 * 30 * 30;
    for (double u = 3.0; u <= 5.0; u += 0.25) CHECK(bonferroni_p(u, n, dist::kInfiniteDf) >= voxel_fwe_p(u, ctx));
  }
}

TEST_CASE("voxel FWE is calibrated on smooth Gaussian fields") {
  const Grid g = cube_grid(40, 2.0);
  const Mask m = interior(g, 6);
  // Six voxels FWHM; the lattice makes the voxel bound conservative at lower smoothness.
  const double fwhm = 12.0;
  const auto ctx = RftContext::from_mask(
      m, SmoothnessEstimate::from_fwhm({fwhm, fwhm, fwhm}, m.volume_mm3(), SmoothnessSource::group_residuals),
      dist::kInfiniteDf, FieldKind::gaussian);
  double lo = 2.0, hi = 8.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (voxel_fwe_p(mid, ctx) > 0.05 ? lo : hi) = mid;
  }
  std::size_t hits = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto v = synth_null_subject(g, KernelSpec::gaussian(fwhm), m, nullptr, s);
    double mx = -1e300;
    for (auto i : m.indices()) mx = std::max(mx, v.data()[i]);
    hits += mx > hi;
  }
  const double rate = static_cast<double>(hits) / 1000.0;
  MESSAGE("voxel threshold " << hi << ", empirical FWE " << rate);
  CHECK(rate >= 0.025);
  CHECK(rate <= 0.065);
}

TEST_CASE("cluster FWE p") {
  const auto ctx = box_context(8.0, 40);
  const auto cdt = CdtSpec::from_p(0.001);
  CHECK(cluster_fwe_p(0, cdt, ctx, 8.0) == 1.0);
  double prev = 1.0;
  for (std::size_t k = 1; k < 400; ++k) {
    const double p = cluster_fwe_p(k, cdt, ctx, 8.0);
    CHECK(p < prev);
    CHECK(p > 0.0);
    prev = p;
  }
  const auto bigger = box_context(8.0, 48);
  for (std::size_t k : {5, 20, 80}) CHECK(cluster_fwe_p(k, cdt, bigger, 8.0) > cluster_fwe_p(k, cdt, ctx, 8.0));
  CHECK_ERRC(cluster_fwe_p(10, CdtSpec::from_z(1.5), ctx, 8.0), Errc::cdt_too_low);
  CHECK_ERRC(cluster_fwe_p(10, CdtSpec::from_p(0.1), ctx, 8.0), Errc::cdt_too_low);

  SUBCASE("native t densities when requested") {
    auto t = box_context(8.0, 40, 14.0, FieldKind::student_t);
    const double gz = cluster_fwe_p(30, CdtSpec::from_p(0.001, 14.0), t, 8.0);
    t.native_t_clusters = true;
    const double nt = cluster_fwe_p(30, CdtSpec::from_p(0.001, 14.0), t, 8.0);
    CHECK(nt >= 0.0);
    CHECK(nt <= 1.0);
    CHECK(nt != gz);
  }
}

TEST_CASE("cluster extent thresholds") {
  const auto ctx = box_context(8.0, 40);
  for (double p : {0.01, 0.001}) {
    const auto cdt = CdtSpec::from_p(p);
    const auto k = rft_cluster_threshold(0.05, cdt, ctx, 8.0);
    CHECK(k >= 1);
    CHECK(cluster_fwe_p(k, cdt, ctx, 8.0) <= 0.05);
    CHECK(cluster_fwe_p(k - 1, cdt, ctx, 8.0) > 0.05);
  }
  CHECK(rft_cluster_threshold(0.05, CdtSpec::from_p(0.01), ctx, 8.0) >
        rft_cluster_threshold(0.05, CdtSpec::from_p(0.001), ctx, 8.0));
  std::size_t prev = 0;
  for (double f : {4.0, 6.0, 8.0, 10.0}) {
    const auto k = rft_cluster_threshold(0.05, CdtSpec::from_p(0.01), box_context(f, 40), 8.0);
    CHECK(k > prev);
    prev = k;
  }
}

TEST_CASE("cluster FWE under matched assumptions") {
  const Grid g = cube_grid(40, 2.0);
  const Mask m = interior(g, 6);
  const double fwhm = 6.0;
  const auto ctx = RftContext::from_mask(
      m, SmoothnessEstimate::from_fwhm({fwhm, fwhm, fwhm}, m.volume_mm3(), SmoothnessSource::group_residuals),
      dist::kInfiniteDf, FieldKind::gaussian);
  const auto cdt = CdtSpec::from_z(3.09);
  const auto k = rft_cluster_threshold(0.05, cdt, ctx, g.voxel_volume_mm3());
  ClusterWorkspace ws(m, Connectivity::faces6);
  std::size_t hits = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto v = synth_null_subject(g, KernelSpec::gaussian(fwhm), m, nullptr, 50000 + s);
    hits += ws.max_extent(v.data(), 3.09) >= k;
  }
  const double rate = static_cast<double>(hits) / 1000.0;
  MESSAGE("extent threshold " << k << ", empirical FWE " << rate);
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}

TEST_CASE("context validation") {
  RftContext bad;
  CHECK_ERRC(bad.validate(), Errc::invalid_argument);
  auto t = box_context(8.0, 20, 0.5, FieldKind::gaussian);
  t.kind = FieldKind::student_t;
  CHECK_ERRC(t.validate(), Errc::invalid_argument);
  const auto s = SmoothnessEstimate::from_fwhm({8, 8, 8}, 64000.0, SmoothnessSource::group_residuals);
  const auto v = RftContext::from_volume(s, 64000.0, dist::kInfiniteDf, FieldKind::gaussian);
  CHECK(v.resels[0] == 1.0);
  CHECK(v.resels[3] == doctest::Approx(125.0));
}
