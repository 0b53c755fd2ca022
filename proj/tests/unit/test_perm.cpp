#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "fwe/distributions.hpp"
#include "fwe/perm.hpp"
#include "fwe/random.hpp"
#include "fwe/synth.hpp"
#include "support.hpp"

using namespace fwe;

namespace {

SubjectStack random_stack(const Grid& g, std::size_t n, std::uint64_t seed, double fwhm = 0.0, double shift = 0.0) {
  std::vector<Volume3> frames;
  const Mask full = Mask::full(g);
  for (std::size_t k = 0; k < n; ++k) {
    if (fwhm > 0.0) {
      auto v = synth_null_subject(g, KernelSpec::gaussian(fwhm), full, nullptr, derive_seed(seed, {k}));
      std::vector<double> d(v.data().begin(), v.data().end());
      for (auto& x : d) x += shift;
      frames.emplace_back(g, std::move(d));
    } else {
      Rng rng(derive_seed(seed, {k}));
      std::vector<double> d(g.size());
      rng.fill_gaussian(d);
      for (auto& x : d) x += shift;
      frames.emplace_back(g, std::move(d));
    }
  }
  return SubjectStack{Volume4::stack(frames), std::nullopt};
}

SubjectStack flipped(const SubjectStack& s, std::size_t bits) {
  std::vector<Volume3> frames;
  for (std::size_t k = 0; k < s.n_subjects(); ++k) {
    auto f = s.betas.frame(k);
    std::vector<double> d(f.begin(), f.end());
    if (((bits >> k) & 1U) != 0) {
      for (auto& x : d) x = -x;
    }
    frames.emplace_back(s.betas.grid(), std::move(d));
  }
  return SubjectStack{Volume4::stack(frames), std::nullopt};
}

double masked_max(const Volume3& v, const Mask& m, int sign) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : m.indices()) mx = std::max(mx, sign * v[i]);
  return mx;
}

struct Oracle {
  std::vector<double> max_pos, max_neg;
  std::vector<std::size_t> ext_pos, ext_neg;
};

// Counts with a relative slack so last-bit differences between routes cannot flip ties.
std::size_t count_at_least(const std::vector<double>& v, double x) {
  std::size_t c = 0;
  for (double y : v) c += y >= x - 1e-9 * std::max(1.0, std::abs(x));
  return c;
}

}  // namespace

TEST_CASE("sign flips match exhaustive enumeration") {
  const Grid g{{10, 9, 8}, {2.0, 2.0, 2.0}};
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {9, 8, 7});
  for (std::size_t n : {2, 3, 4}) {
    CAPTURE(n);
    const auto s = random_stack(g, n, 100 + n, 4.0, 0.4);
    PermOptions o;
    o.cdts = {CdtSpec::from_p(0.05)};
    o.n_resamples = 1000;
    o.tail = Tail::two_sided;
    o.seed = 8;
    const auto null = perm_build_null(s, m, o);
    REQUIRE(null.exhaustive);
    REQUIRE(null.n_resamples() == (std::size_t{1} << n));
    const double thr = cdt_stat_threshold(o.cdts[0], static_cast<double>(n - 1));

    Oracle orc;
    for (std::size_t b = 0; b < (std::size_t{1} << n); ++b) {
      const auto r = one_sample_t(flipped(s, b), m);
      orc.max_pos.push_back(masked_max(r.stat, m, 1));
      orc.max_neg.push_back(masked_max(r.stat, m, -1));
      orc.ext_pos.push_back(max_extent(label_clusters(r.stat, thr, m, o.connectivity, 1)));
      orc.ext_neg.push_back(max_extent(label_clusters(r.stat, thr, m, o.connectivity, -1)));
    }
    for (std::size_t b = 0; b < orc.max_pos.size(); ++b) {
      CHECK(null.max_stats_pos[b] == doctest::Approx(orc.max_pos[b]).epsilon(1e-10));
      CHECK(null.max_stats_neg[b] == doctest::Approx(orc.max_neg[b]).epsilon(1e-10));
      CHECK(null.max_extents_pos[0][b] == orc.ext_pos[b]);
      CHECK(null.max_extents_neg[0][b] == orc.ext_neg[b]);
    }
    // Exact p equality, including the observed map.
    std::vector<double> both;
    for (std::size_t b = 0; b < orc.max_pos.size(); ++b) both.push_back(std::max(orc.max_pos[b], orc.max_neg[b]));
    const auto obs = one_sample_t(s, m);
    // Probe between distinct null values so route-level rounding cannot flip ties.
    std::vector<double> sorted = both;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> probes{sorted.front() - 1.0, sorted.back() + 1.0};
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i] - sorted[i - 1] > 1e-6) probes.push_back(0.5 * (sorted[i] + sorted[i - 1]));
    }
    for (double x : probes) {
      CHECK(perm_voxel_fwe_p(x, null) == static_cast<double>(count_at_least(both, x)) / static_cast<double>(both.size()));
    }
    const double observed = std::max(masked_max(obs.stat, m, 1), masked_max(obs.stat, m, -1));
    CHECK(perm_voxel_fwe_p(null.max_stat(0), null) ==
          static_cast<double>(count_at_least(both, observed)) / static_cast<double>(both.size()));
    for (const auto& c : label_clusters(obs.stat, thr, m, o.connectivity, 1).clusters) {
      std::size_t k = 0;
      for (std::size_t b = 0; b < orc.ext_pos.size(); ++b) k += std::max(orc.ext_pos[b], orc.ext_neg[b]) >= c.size_voxels;
      CHECK(perm_cluster_fwe_p(c.size_voxels, null) == static_cast<double>(k) / static_cast<double>(both.size()));
    }
  }
}

TEST_CASE("two-sample relabeling matches exhaustive enumeration") {
  const Grid g{{8, 8, 8}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto a = random_stack(g, 3, 1, 4.0);
  const auto b = random_stack(g, 3, 2, 4.0, 0.3);
  PermOptions o;
  o.cdts = {CdtSpec::from_p(0.05)};
  o.n_resamples = 100;
  const auto null = perm_build_null(a, b, m, o);
  REQUIRE(null.exhaustive);
  REQUIRE(null.n_resamples() == 20);
  CHECK(null.df == 4.0);

  std::vector<Volume3> all;
  for (std::size_t k = 0; k < 3; ++k) all.push_back(a.betas.frame_volume(k));
  for (std::size_t k = 0; k < 3; ++k) all.push_back(b.betas.frame_volume(k));
  const SubjectStack pooled{Volume4::stack(all), std::nullopt};
  std::vector<double> oracle_max;
  std::vector<std::size_t> oracle_ext;
  const double thr = cdt_stat_threshold(o.cdts[0], 4.0);
  for (std::uint32_t mask_bits = 0; mask_bits < 64; ++mask_bits) {
    if (std::popcount(mask_bits) != 3) continue;
    std::vector<std::uint32_t> g1, g2;
    for (std::uint32_t k = 0; k < 6; ++k) ((mask_bits >> k) & 1U ? g1 : g2).push_back(k);
    const auto r = two_sample_t(pooled, g1, g2, m);
    oracle_max.push_back(masked_max(r.stat, m, 1));
    oracle_ext.push_back(max_extent(label_clusters(r.stat, thr, m, o.connectivity)));
  }
  std::vector<double> engine_max(null.max_stats_pos);
  std::sort(engine_max.begin(), engine_max.end());
  std::sort(oracle_max.begin(), oracle_max.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(engine_max[i] == doctest::Approx(oracle_max[i]).epsilon(1e-10));
  std::vector<std::size_t> engine_ext(null.max_extents_pos[0].begin(), null.max_extents_pos[0].end());
  std::sort(engine_ext.begin(), engine_ext.end());
  std::sort(oracle_ext.begin(), oracle_ext.end());
  CHECK(engine_ext == oracle_ext);

  // Resample 0 is the observed labeling.
  const auto obs = two_sample_t(a, b, m);
  CHECK(null.max_stats_pos[0] == doctest::Approx(masked_max(obs.stat, m, 1)).epsilon(1e-10));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(null.observed[i] == doctest::Approx(obs.stat[i]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("p-value floor and identity") {
  const Grid g{{10, 10, 10}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto s = random_stack(g, 20, 5);
  PermOptions o;
  o.n_resamples = 5000;
  o.seed = 3;
  const auto null = perm_build_null(s, m, o);
  CHECK_FALSE(null.exhaustive);
  CHECK(null.n_resamples() == 5000);
  const double top = *std::max_element(null.max_stats_pos.begin(), null.max_stats_pos.end());
  CHECK(perm_voxel_fwe_p(top + 1.0, null) == 0.0);
  // Observed maps sit inside their own null, so the floor is 1/5000.
  CHECK(perm_voxel_fwe_p(null.max_stats_pos[0], null) >= 0.0002);
  double min_p = 1.0;
  for (std::size_t r = 0; r < null.n_resamples(); ++r) min_p = std::min(min_p, perm_voxel_fwe_p(null.max_stat(r), null));
  CHECK(min_p == 0.0002);
  CHECK(perm_voxel_fwe_p(-std::numeric_limits<double>::infinity(), null) == 1.0);
  // Oracle replay from the stored maxima.
  for (double x : {-1.0, 2.0, 3.5, 4.0, 4.5, 5.0}) {
    std::size_t c = 0;
    for (double v : null.max_stats_pos) c += v >= x;
    CHECK(perm_voxel_fwe_p(x, null) == static_cast<double>(c) / 5000.0);
  }
}

TEST_CASE("cluster p conventions") {
  const Grid g{{12, 12, 12}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto a = random_stack(g, 4, 10, 6.0);
  const auto b = random_stack(g, 4, 11, 6.0);
  PermOptions o;
  o.n_resamples = 60;
  o.cdts = {CdtSpec::from_p(0.01), CdtSpec::from_p(0.001)};
  o.tail = Tail::two_sided;
  o.seed = 4;
  const auto null = perm_build_null(a, b, m, o);
  CHECK_FALSE(null.exhaustive);  // C(8,4) = 70 > 60
  std::uint32_t top = 0;
  for (std::size_t r = 0; r < null.n_resamples(); ++r) top = std::max(top, null.max_extent(0, r));
  CHECK(perm_cluster_fwe_p(0, null) == 1.0);
  CHECK(perm_cluster_fwe_p(top + 1, null) == 0.0);
  CHECK(perm_cluster_fwe_p(top, null) >= 1.0 / static_cast<double>(null.n_resamples()));
  CHECK_ERRC(perm_cluster_fwe_p(3, null, 2), Errc::cdt_missing);
  for (std::size_t r = 0; r < null.n_resamples(); ++r) {
    CHECK(null.max_extents_pos[1][r] <= null.max_extents_pos[0][r]);
    CHECK(null.max_stat(r) == std::max(null.max_stats_pos[r], null.max_stats_neg[r]));
  }
  CHECK(perm_cluster_fwe_p_signed(0, null, 0, -1) == 1.0);

  PermOptions voxel_only;
  voxel_only.n_resamples = 50;
  const auto vnull = perm_build_null(a, b, m, voxel_only);
  CHECK_ERRC(perm_cluster_fwe_p(3, vnull), Errc::cdt_missing);
  CHECK_ERRC(perm_cluster_fwe_p_signed(3, perm_build_null(a, b, m, [] {
                                          PermOptions p;
                                          p.n_resamples = 20;
                                          p.cdts = {CdtSpec::from_p(0.01)};
                                          return p;
                                        }()),
                                        0, -1),
             Errc::invalid_argument);
}

TEST_CASE("identical subject maps give a zero null") {
  const Grid g{{6, 6, 6}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto one = random_stack(g, 1, 9);
  std::vector<Volume3> same(4, one.betas.frame_volume(0));
  const SubjectStack s{Volume4::stack(same), std::nullopt};
  PermOptions o;
  o.n_resamples = 50;
  o.cdts = {CdtSpec::from_p(0.01)};
  const auto null = perm_build_null(s, s, m, o);
  for (std::size_t r = 0; r < null.n_resamples(); ++r) {
    CHECK(null.max_stats_pos[r] == 0.0);
    CHECK(null.max_stats_neg[r] == 0.0);
    CHECK(null.max_extents_pos[0][r] == 0);
  }
}

TEST_CASE("thread count and reruns do not change the null") {
  const Grid g{{12, 12, 12}, {2.0, 2.0, 2.0}};
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {11, 11, 10});
  const auto a = random_stack(g, 8, 20, 5.0);
  const auto b = random_stack(g, 8, 21, 5.0);
  PermOptions o;
  o.n_resamples = 300;
  o.cdts = {CdtSpec::from_p(0.01)};
  o.tail = Tail::two_sided;
  o.seed = 77;
  o.threads = 1;
  const auto x = perm_build_null(a, b, m, o);
  o.threads = 4;
  const auto y = perm_build_null(a, b, m, o);
  o.threads = 8;
  const auto z = perm_build_null(a, b, m, o);
  CHECK(x.max_stats_pos == y.max_stats_pos);
  CHECK(x.max_stats_neg == z.max_stats_neg);
  CHECK(x.max_extents_pos == z.max_extents_pos);
  CHECK(x.max_extents_neg == y.max_extents_neg);
  o.seed = 78;
  const auto w = perm_build_null(a, b, m, o);
  CHECK(w.max_stats_pos[0] == x.max_stats_pos[0]);
  CHECK(w.max_stats_pos != x.max_stats_pos);
}

TEST_CASE("exchangeability: subject order does not change an exhaustive null") {
  const Grid g{{8, 8, 8}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto a = random_stack(g, 3, 30, 4.0);
  const auto b = random_stack(g, 4, 31, 4.0);
  // Swap one subject between groups: the pooled set is unchanged.
  std::vector<Volume3> a2, b2;
  a2.push_back(b.betas.frame_volume(0));
  a2.push_back(a.betas.frame_volume(1));
  a2.push_back(a.betas.frame_volume(2));
  b2.push_back(a.betas.frame_volume(0));
  for (std::size_t k = 1; k < 4; ++k) b2.push_back(b.betas.frame_volume(k));
  PermOptions o;
  o.n_resamples = 100;  // C(7,3) = 35
  o.cdts = {CdtSpec::from_p(0.05)};
  const auto x = perm_build_null(a, b, m, o);
  const auto y = perm_build_null(SubjectStack{Volume4::stack(a2), std::nullopt},
                                 SubjectStack{Volume4::stack(b2), std::nullopt}, m, o);
  REQUIRE(x.exhaustive);
  REQUIRE(x.n_resamples() == 35);
  auto sx = x.max_stats_pos, sy = y.max_stats_pos;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());
  for (std::size_t i = 0; i < sx.size(); ++i) CHECK(sx[i] == doctest::Approx(sy[i]).epsilon(1e-10));
  auto ex = x.max_extents_pos[0], ey = y.max_extents_pos[0];
  std::sort(ex.begin(), ex.end());
  std::sort(ey.begin(), ey.end());
  CHECK(ex == ey);
}

TEST_CASE("perm sidecar round trip") {
  const Grid g{{8, 8, 8}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  const auto s = random_stack(g, 10, 40, 4.0);
  PermOptions o;
  o.n_resamples = 64;
  o.cdts = {CdtSpec::from_p(0.01), CdtSpec::from_p(0.001)};
  o.tail = Tail::two_sided;
  o.seed = 0xABCDEF;
  const auto null = perm_build_null(s, m, o);
  testing::TempDir dir;
  write_perm_null(null, dir / "p.bin");
  const auto back = read_perm_null(dir / "p.bin");
  CHECK(back.scheme == PermScheme::sign_flip_one_sample);
  CHECK(back.tail == Tail::two_sided);
  CHECK(back.seed == 0xABCDEF);
  CHECK(back.df == 9.0);
  CHECK(back.cdt_thresholds == null.cdt_thresholds);
  CHECK(back.max_stats_pos == null.max_stats_pos);
  CHECK(back.max_stats_neg == null.max_stats_neg);
  CHECK(back.max_extents_pos == null.max_extents_pos);
  CHECK(back.max_extents_neg == null.max_extents_neg);
  CHECK(perm_cluster_fwe_p(4, back, 1) == perm_cluster_fwe_p(4, null, 1));
  CHECK(std::filesystem::file_size(dir / "p.bin") == 8 + 4 + 1 + 1 + 2 + 8 + 8 + 8 + 2 * 16 + 64 * 16 + 2 * 64 * 8);
  {
    std::ofstream f(dir / "bad.bin", std::ios::binary);
    f << "FWEPRM01";
  }
  CHECK_THROWS_AS(read_perm_null(dir / "bad.bin"), Error);
}

TEST_CASE("perm preconditions") {
  const Grid g{{6, 6, 6}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  PermOptions o;
  CHECK_ERRC(perm_build_null(random_stack(g, 1, 1), m, o), Errc::too_few_subjects);
  CHECK_ERRC(perm_build_null(random_stack(g, 1, 1), random_stack(g, 3, 2), m, o), Errc::too_few_subjects);
  o.n_resamples = 0;
  CHECK_ERRC(perm_build_null(random_stack(g, 9, 1), m, o), Errc::invalid_argument);
  const Grid other{{7, 6, 6}, {2.0, 2.0, 2.0}};
  o.n_resamples = 10;
  CHECK_ERRC(perm_build_null(random_stack(other, 3, 1), m, o), Errc::dim_mismatch);
  CHECK(cdt_stat_threshold(CdtSpec::from_p(0.01), 14.0) == doctest::Approx(dist::t_isf(0.01, 14.0)));
  CHECK(cdt_stat_threshold(CdtSpec::from_z(3.09), dist::kInfiniteDf) == doctest::Approx(3.09).epsilon(1e-6));
}
