// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 100).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fwe/cluster.hpp"
#include "fwe/distributions.hpp"
#include "fwe/geometry.hpp"
#include "fwe/glm.hpp"
#include "fwe/harness.hpp"
#include "fwe/mc.hpp"
#include "fwe/nifti.hpp"
#include "fwe/perm.hpp"
#include "fwe/random.hpp"
#include "fwe/synth.hpp"

using namespace fwe;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kBandLow = 0.0365;
constexpr double kBandHigh = 0.0635;
constexpr std::size_t kAnalyses = 1000;
constexpr std::size_t kVariantAnalyses = 200;
constexpr std::size_t kMcIterations = 10000;
constexpr double kMcRatioLow = 1.05;
constexpr double kMcRatioHigh = 1.30;
constexpr double kSigmas = 3.0;
constexpr double kMemaVarMax = 0.95;
constexpr double kMemaSigmas = 5.0;
constexpr double kAdhocMin = 0.25;
constexpr double kRatioMedianMin = 3.0;

struct Options {
  unsigned threads = 1;
  fs::path workdir = "acceptance_work";
  bool resume = false;
  std::set<int> only;
};

int g_failed = 0;

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

void verdict(const std::string& id, bool pass, const std::string& text) {
  if (!pass) ++g_failed;
  std::cout << (pass ? "PASS " : "FAIL ") << id << "  " << text << std::endl;
}

void info(const std::string& id, const std::string& text) { std::cout << "INFO " << id << "  " << text << std::endl; }

double se(double rate, std::size_t n) { return std::sqrt(std::max(rate * (1.0 - rate), 1e-12) / static_cast<double>(n)); }

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

CampaignSpec desk_campaign(const KernelSpec& kernel, const Options& o, const std::string& tag) {
  CampaignSpec s;
  s.data_source = DataSource::synthetic_beta_maps;
  s.n_analyses = kAnalyses;
  s.test = TestKind::two_sample;
  s.group_size = 8;
  s.kernel = kernel;
  s.cdt = {CdtSpec::from_p(0.01), CdtSpec::from_p(0.001)};
  s.inference = {Backend::perm_cluster, Backend::rft_cluster, Backend::rft_voxel, Backend::bonferroni_voxel};
  s.grid = cube_grid(48, 2.0);
  s.mask_semi_axes_mm = {46.0, 44.0, 40.0};
  s.pool_size = 100;
  s.n_resamples = 1000;
  s.seed = 20160101;
  s.threads = o.threads;
  s.checkpoint_dir = o.workdir / ("ck_" + tag);
  return s;
}

FweReport run_logged(const CampaignSpec& spec, const fs::path& csv, const std::string& what) {
  Stopwatch w;
  auto r = run_campaign(spec);
  write_fwe_report_csv(r, csv);
  std::cerr << "[acceptance] " << what << ": " << fmt("%.0f", w.seconds()) << " s\n";
  return r;
}

const FweRow& row(const FweReport& r, Backend b, std::optional<double> cdt = std::nullopt) {
  const auto* x = r.find(b, cdt);
  if (x == nullptr) throw std::runtime_error(std::string("missing row ") + to_string(b));
  return *x;
}

std::string rate_str(const FweRow& r) {
  if (r.failed) return "failed (" + r.error + ")";
  return fmt("%.4f", r.fwe_rate) + " (" + std::to_string(r.n_significant) + "/" + std::to_string(r.n_analyses) + ")";
}

bool in_band(const FweRow& r) { return !r.failed && r.fwe_rate >= kBandLow && r.fwe_rate <= kBandHigh; }

// ---------------------------------------------------------------------------
// Criteria 1, 2, 3, 10 and the corners26 variant share the two campaigns.

struct Campaigns {
  FweReport gauss;
  FweReport heavy;
};

Campaigns run_main_campaigns(const Options& o) {
  Campaigns c;
  c.gauss = run_logged(desk_campaign(KernelSpec::gaussian(6.0), o, "gauss"), o.workdir / "fwe_gaussian.csv",
                       "gaussian campaign");
  c.heavy = run_logged(desk_campaign(KernelSpec::mixture({6.0, 18.0}, {0.5, 0.5}), o, "heavy"),
                       o.workdir / "fwe_mixture.csv", "mixture campaign");
  write_ratio_report_csv(c.heavy.ratios, o.workdir / "ratio_mixture.csv");
  return c;
}

void criterion1(const Campaigns& c) {
  const auto& r = row(c.gauss, Backend::perm_cluster, 0.01);
  verdict("C1", in_band(r),
          "perm_cluster FWE, gaussian 6 mm, CDT p=0.01: " + rate_str(r) + " in [0.0365, 0.0635]");
}

void criterion2(const Campaigns& c) {
  const auto& r01 = row(c.heavy, Backend::rft_cluster, 0.01);
  const auto& r001 = row(c.heavy, Backend::rft_cluster, 0.001);
  const double upper = binomial_ci(50, kAnalyses).second;
  const double za = r01.failed ? 0.0 : (r01.fwe_rate - upper) / se(r01.fwe_rate, kAnalyses);
  const double zb = (r01.failed || r001.failed)
                        ? 0.0
                        : (r01.fwe_rate - r001.fwe_rate) /
                              std::hypot(se(r01.fwe_rate, kAnalyses), se(r001.fwe_rate, kAnalyses));
  const auto& p01 = row(c.heavy, Backend::perm_cluster, 0.01);
  const auto& p001 = row(c.heavy, Backend::perm_cluster, 0.001);
  verdict("C2a", za >= kSigmas,
          "rft_cluster FWE, mixture, CDT p=0.01: " + rate_str(r01) + " vs binomial upper bound " +
              fmt("%.4f", upper) + ", z=" + fmt("%.2f", za) + " (need >= 3)");
  verdict("C2b", zb >= kSigmas,
          "rft_cluster FWE, mixture, CDT p=0.01 vs p=0.001: " + rate_str(r01) + " vs " + rate_str(r001) +
              ", z=" + fmt("%.2f", zb) + " (need >= 3)");
  verdict("C2c", in_band(p01) && in_band(p001),
          "perm_cluster FWE, mixture: CDT p=0.01 " + rate_str(p01) + ", CDT p=0.001 " + rate_str(p001) +
              " in [0.0365, 0.0635]");
}

void criterion3(const Campaigns& c) {
  bool ok = true;
  std::string text;
  for (const auto* rep : {&c.gauss, &c.heavy}) {
    for (Backend b : {Backend::rft_voxel, Backend::bonferroni_voxel}) {
      const auto& r = row(*rep, b);
      ok = ok && !r.failed && r.fwe_rate <= kBandHigh;
      text += std::string(rep == &c.gauss ? "gaussian " : "mixture ") + to_string(b) + " " + rate_str(r) + "; ";
    }
  }
  verdict("C3", ok, text + "each <= 0.0635");
}

void criterion10(const Campaigns& c) {
  RatioReport at01;
  bool filtered = true;
  for (const auto& r : c.heavy.ratios.rows) {
    filtered = filtered && r.parametric_p >= kRatioMinParametricP && r.parametric_p <= kRatioMaxParametricP;
    if (r.contrast_tag.find("@p0.01") != std::string::npos) at01.rows.push_back(r);
  }
  // Filter by construction: 5e-5 and 0.06 drop out, both edges stay.
  const std::vector<ClusterPPair> par{{10, 1, 1, 5e-5}, {11, 2, 1, 1e-4}, {12, 3, 1, 0.05}, {13, 4, 1, 0.06}};
  auto non = par;
  for (auto& x : non) x.p = 0.5;
  const auto built = compare_backends(par, non, "construct", "filter");
  const bool construct_ok = built.rows.size() == 2 && built.rows[0].cluster_size_voxels == 11 &&
                            built.rows[1].cluster_size_voxels == 12;
  const double med = at01.median_ratio();
  verdict("C10", !at01.rows.empty() && med > kRatioMedianMin && filtered && construct_ok,
          "median nonparametric/parametric cluster p ratio, mixture, CDT p=0.01: " + fmt("%.3f", med) + " over " +
              std::to_string(at01.rows.size()) + " clusters (need > 3); filter " +
              (filtered && construct_ok ? "verified" : "BROKEN"));
}

void variant_corners26(const Options& o) {
  for (const auto& [tag, kernel] :
       std::vector<std::pair<std::string, KernelSpec>>{{"gaussian", KernelSpec::gaussian(6.0)},
                                                         {"mixture", KernelSpec::mixture({6.0, 18.0}, {0.5, 0.5})}}) {
    auto s = desk_campaign(kernel, o, "c26_" + tag);
    s.connectivity = Connectivity::corners26;
    s.n_analyses = kVariantAnalyses;
    s.inference = {Backend::perm_cluster, Backend::rft_cluster};
    const auto r = run_logged(s, o.workdir / ("fwe_" + tag + "_corners26.csv"), tag + " corners26 variant");
    for (double p : {0.01, 0.001}) {
      info("V26", tag + " corners26 CDT p=" + fmt("%g", p) + ": perm_cluster " +
                      rate_str(row(r, Backend::perm_cluster, p)) + ", rft_cluster " +
                      rate_str(row(r, Backend::rft_cluster, p)));
    }
  }
}

// ---------------------------------------------------------------------------

void criterion4(const Options& o) {
  const Grid g = cube_grid(64, 2.0);
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {60.0, 58.0, 52.0});
  const auto cdt = CdtSpec::from_p(0.01);
  McOptions opt;
  opt.n_iterations = kMcIterations;
  opt.seed = 15;
  opt.threads = o.threads;
  Stopwatch w;
  opt.mode = McMode::fixed_analytic_rescale;
  const auto fixed = mc_build_null(m, KernelSpec::gaussian(8.0), cdt.z_equivalent(), opt);
  opt.mode = McMode::buggy_empirical_rescale;
  const auto buggy = mc_build_null(m, KernelSpec::gaussian(8.0), cdt.z_equivalent(), opt);
  write_mc_null(fixed, o.workdir / "mc_fixed.bin");
  write_mc_null(buggy, o.workdir / "mc_buggy.bin");
  std::cerr << "[acceptance] Monte Carlo nulls: " << fmt("%.0f", w.seconds()) << " s\n";
  const auto tf = mc_extent_threshold(fixed, 0.05);
  const auto tb = mc_extent_threshold(buggy, 0.05);
  const double ratio = static_cast<double>(tf) / static_cast<double>(tb);
  verdict("C4", ratio >= kMcRatioLow && ratio <= kMcRatioHigh,
          "MC extent threshold fixed/buggy, 64^3 ellipsoid, FWHM 8 mm, CDT p=0.01, 10000 iterations: " +
              std::to_string(tf) + "/" + std::to_string(tb) + " = " + fmt("%.3f", ratio) + " (need [1.05, 1.30])");
}

void criterion5() {
  const Grid g{{48, 48, 48}, {2, 2, 2}};
  const std::size_t n = 8;
  Rng rng(5);
  std::vector<double> betas(n * g.size());
  std::vector<double> vars(n * g.size());
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double v = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
    vars[i] = v;
    betas[i] = std::sqrt(v) * rng.gaussian();
  }
  const SubjectStack s{Volume4(g, n, betas), Volume4(g, n, vars)};
  const auto r = mema_t(s, Mask::full(g));
  const auto z = r.stat.data();
  const auto nz = static_cast<double>(z.size());
  double mean = 0.0;
  for (double x : z) mean += x;
  mean /= nz;
  double m2 = 0.0, m4 = 0.0;
  for (double x : z) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  const double var = m2 / (nz - 1.0);
  const double se_var = std::sqrt((m4 / nz - var * var) / nz);
  const double sig = (1.0 - var) / se_var;
  verdict("C5", var < kMemaVarMax && sig >= kMemaSigmas,
          "mema null z variance over " + std::to_string(z.size()) + " voxels: " + fmt("%.4f", var) +
              " (need < 0.95), below 1 by " + fmt("%.1f", sig) + " SE (need >= 5)");
}

void criterion6() {
  const double f = sacf_sigma_to_fwhm(5.0);
  const double z01 = dist::normal_isf(0.01);
  const double z001 = dist::normal_isf(0.001);
  verdict("C6", std::abs(f - 8.33) <= 0.05 && std::abs(z01 - 2.326) <= 0.03 && std::abs(z001 - 3.090) <= 0.02,
          "SACF sigma 5 mm -> FWHM " + fmt("%.4f", f) + " (8.33 +- 0.05); z(0.01) " + fmt("%.4f", z01) +
              " (2.326 +- 0.03); z(0.001) " + fmt("%.4f", z001) + " (3.090 +- 0.02)");
}

void criterion7(const Options& o) {
  auto s = desk_campaign(KernelSpec::mixture({6.0, 18.0}, {0.5, 0.5}), o, "adhoc");
  Stopwatch w;
  const auto r = run_adhoc(s, AdhocSpec{0.001, 80.0});
  write_fwe_report_csv(r, o.workdir / "fwe_adhoc.csv");
  std::cerr << "[acceptance] ad hoc campaign: " << fmt("%.0f", w.seconds()) << " s\n";
  const auto& x = row(r, Backend::adhoc_extent);
  verdict("C7", !x.failed && x.fwe_rate > kAdhocMin,
          "ad hoc 80 mm^3 at CDT p=0.001, mixture: FWE " + rate_str(x) + " (need > 0.25)");
}

// ---------------------------------------------------------------------------
// Criterion 8

SubjectStack flip(const SubjectStack& s, std::size_t bits) {
  std::vector<Volume3> frames;
  for (std::size_t k = 0; k < s.n_subjects(); ++k) {
    const auto f = s.betas.frame(k);
    std::vector<double> d(f.begin(), f.end());
    if (((bits >> k) & 1U) != 0) {
      for (auto& x : d) x = -x;
    }
    frames.emplace_back(s.betas.grid(), std::move(d));
  }
  return SubjectStack{Volume4::stack(frames), std::nullopt};
}

bool sign_flip_oracle() {
  const Grid g{{12, 12, 10}, {2.0, 2.0, 2.0}};
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {11, 11, 9});
  bool ok = true;
  for (std::size_t n = 2; n <= 4; ++n) {
    std::vector<Volume3> frames;
    for (std::size_t k = 0; k < n; ++k) {
      auto v = synth_null_subject(g, KernelSpec::gaussian(4.0), Mask::full(g), nullptr, derive_seed(81, {n, k}));
      std::vector<double> d(v.data().begin(), v.data().end());
      for (auto& x : d) x += 0.3;
      frames.emplace_back(g, std::move(d));
    }
    const SubjectStack s{Volume4::stack(frames), std::nullopt};
    PermOptions po;
    po.n_resamples = 1000;
    po.cdts = {CdtSpec::from_p(0.05)};
    po.seed = 1;
    const auto null = perm_build_null(s, m, po);
    ok = ok && null.exhaustive && null.n_resamples() == (std::size_t{1} << n);
    const double thr = cdt_stat_threshold(po.cdts[0], static_cast<double>(n - 1));
    std::vector<double> maxes;
    std::vector<std::size_t> extents;
    for (std::size_t b = 0; b < (std::size_t{1} << n); ++b) {
      const auto t = one_sample_t(flip(s, b), m).stat;
      double mx = -std::numeric_limits<double>::infinity();
      for (auto i : m.indices()) mx = std::max(mx, t[i]);
      maxes.push_back(mx);
      extents.push_back(max_extent(label_clusters(t, thr, m, po.connectivity)));
    }
    // p at every observed value, read from each route's own maxima.
    for (std::size_t b = 0; b < maxes.size(); ++b) {
      std::size_t c = 0;
      for (double y : maxes) c += y >= maxes[b] - 1e-9 * std::max(1.0, std::abs(maxes[b]));
      ok = ok && perm_voxel_fwe_p(null.max_stat(b), null) == static_cast<double>(c) / static_cast<double>(maxes.size());
      std::size_t k = 0;
      for (auto e : extents) k += e >= extents[b];
      ok = ok && null.max_extent(0, b) == extents[b] &&
           perm_cluster_fwe_p(extents[b], null) == static_cast<double>(k) / static_cast<double>(extents.size());
    }
  }
  return ok;
}

std::vector<std::array<long, 3>> neighbours(Connectivity c) {
  std::vector<std::array<long, 3>> out;
  for (long dz = -1; dz <= 1; ++dz)
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long l1 = std::labs(dx) + std::labs(dy) + std::labs(dz);
        if (l1 == 0) continue;
        if (c == Connectivity::faces6 && l1 > 1) continue;
        if (c == Connectivity::edges18 && l1 > 2) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

bool flood_fill_oracle() {
  const Grid g = cube_grid(16, 2.0);
  const Mask m = Mask::full(g);
  const long n = 16;
  bool ok = true;
  for (Connectivity conn : {Connectivity::faces6, Connectivity::edges18, Connectivity::corners26}) {
    const auto nb = neighbours(conn);
    for (std::uint64_t trial = 0; trial < 1000 && ok; ++trial) {
      Rng rng(derive_seed(88, {static_cast<std::uint64_t>(conn), trial}));
      const double density = rng.uniform(0.1, 0.6);
      std::vector<double> d(g.size());
      for (auto& x : d) x = rng.uniform() < density ? 1.0 : 0.0;
      const Volume3 v(g, d);
      const auto table = label_clusters(v, 0.5, m, conn);
      std::vector<long> comp(g.size(), -1);
      std::vector<std::size_t> sizes;
      for (std::size_t s = 0; s < g.size(); ++s) {
        if (d[s] < 0.5 || comp[s] >= 0) continue;
        const long id = static_cast<long>(sizes.size());
        std::size_t size = 0;
        std::deque<std::size_t> q{s};
        comp[s] = id;
        while (!q.empty()) {
          const auto i = q.front();
          q.pop_front();
          ++size;
          const auto c = g.coords(i);
          for (const auto& o : nb) {
            const long x = static_cast<long>(c[0]) + o[0], y = static_cast<long>(c[1]) + o[1],
                       z = static_cast<long>(c[2]) + o[2];
            if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) continue;
            const auto j = g.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
            if (d[j] < 0.5 || comp[j] >= 0) continue;
            comp[j] = id;
            q.push_back(j);
          }
        }
        sizes.push_back(size);
      }
      // Same partition: a bijection between oracle components and labels.
      std::vector<long> to_label(sizes.size(), -1);
      std::set<std::uint32_t> used;
      for (std::size_t i = 0; i < g.size() && ok; ++i) {
        const auto lab = table.labels[i];
        if (comp[i] < 0) {
          ok = lab == 0;
          continue;
        }
        auto& t = to_label[static_cast<std::size_t>(comp[i])];
        if (t < 0) {
          ok = lab != 0 && used.insert(lab).second;
          t = lab;
        } else {
          ok = t == static_cast<long>(lab);
        }
      }
      std::vector<std::size_t> got;
      for (const auto& c : table.clusters) got.push_back(c.size_voxels);
      std::sort(sizes.rbegin(), sizes.rend());
      ok = ok && got == sizes;
    }
  }
  return ok;
}

bool perm_floor() {
  const Grid g{{10, 10, 10}, {2.0, 2.0, 2.0}};
  const Mask m = Mask::full(g);
  std::vector<Volume3> frames;
  for (std::size_t k = 0; k < 20; ++k) {
    Rng rng(derive_seed(83, {k}));
    std::vector<double> d(g.size());
    rng.fill_gaussian(d);
    frames.emplace_back(g, std::move(d));
  }
  const SubjectStack s{Volume4::stack(frames), std::nullopt};
  PermOptions po;
  po.n_resamples = 5000;
  po.seed = 2;
  const auto null = perm_build_null(s, m, po);
  double floor = 1.0;
  for (std::size_t r = 0; r < null.n_resamples(); ++r) floor = std::min(floor, perm_voxel_fwe_p(null.max_stat(r), null));
  return null.n_resamples() == 5000 && floor == 0.0002;
}

void criterion8() {
  const bool a = sign_flip_oracle();
  const bool b = flood_fill_oracle();
  const bool c = perm_floor();
  verdict("C8", a && b && c,
          std::string("sign flips vs 2^n enumeration (n=2..4): ") + (a ? "exact" : "MISMATCH") +
              "; labeling vs flood fill, 1000 fields x 3 connectivities: " + (b ? "identical" : "MISMATCH") +
              "; p floor at 5000 resamples: " + (c ? "0.0002" : "WRONG"));
}

// ---------------------------------------------------------------------------
// Criterion 9

CampaignSpec determinism_spec(const fs::path& dir) {
  CampaignSpec s;
  s.grid = cube_grid(24, 2.0);
  s.mask_semi_axes_mm = {22.0, 22.0, 20.0};
  s.kernel = KernelSpec::mixture({4.0, 10.0}, {0.5, 0.5});
  s.pool_size = 24;
  s.group_size = 6;
  s.n_analyses = 40;
  s.n_resamples = 200;
  s.mc_iterations = 100;
  s.inference = {Backend::rft_voxel, Backend::rft_cluster, Backend::bonferroni_voxel, Backend::mc_cluster_buggy,
                 Backend::mc_cluster_fixed, Backend::perm_voxel, Backend::perm_cluster};
  s.seed = 909;
  (void)dir;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool nifti_round_trips(const fs::path& dir) {
  const Grid g{{7, 5, 3}, {1.5, 2.0, 2.5}};
  Rng rng(44);
  bool ok = true;
  for (NiftiDatatype dt : {NiftiDatatype::uint8, NiftiDatatype::int16, NiftiDatatype::int32, NiftiDatatype::float32,
                           NiftiDatatype::float64}) {
    std::vector<double> d(g.size() * 2);
    for (auto& x : d) {
      switch (dt) {
        case NiftiDatatype::uint8: x = static_cast<double>(rng.below(256)); break;
        case NiftiDatatype::int16: x = static_cast<double>(rng.below(65536)) - 32768.0; break;
        case NiftiDatatype::int32: x = static_cast<double>(rng.below(std::uint64_t{1} << 32)) - 2147483648.0; break;
        case NiftiDatatype::float32: x = static_cast<double>(static_cast<float>(rng.gaussian() * 1e3)); break;
        case NiftiDatatype::float64: x = rng.gaussian() * 1e-7; break;
      }
    }
    const Volume3 v3(g, std::vector<double>(d.begin(), d.begin() + static_cast<long>(g.size())));
    const Volume4 v4(g, 2, d);
    const auto p3 = dir / ("rt3_" + std::to_string(static_cast<int>(dt)) + ".nii");
    const auto p4 = dir / ("rt4_" + std::to_string(static_cast<int>(dt)) + ".nii");
    write_nifti(v3, p3, dt);
    write_nifti(v4, p4, dt);
    const auto b3 = read_nifti3(p3);
    const auto b4 = read_nifti4(p4);
    ok = ok && b3.grid() == g && b4.grid() == g && b4.frames() == 2;
    ok = ok && std::equal(b3.data().begin(), b3.data().end(), v3.data().begin(), v3.data().end());
    ok = ok && std::equal(b4.data().begin(), b4.data().end(), v4.data().begin(), v4.data().end());
    // Rewriting what was read reproduces the file byte for byte.
    write_nifti(b3, dir / "again.nii", dt);
    ok = ok && slurp(dir / "again.nii") == slurp(p3);
  }
  return ok;
}

void criterion9(const Options& o) {
  const fs::path dir = o.workdir / "determinism";
  fs::create_directories(dir);
  std::vector<std::string> csvs;
  for (unsigned t : {1U, 4U, 8U}) {
    auto s = determinism_spec(dir);
    s.threads = t;
    const auto path = dir / ("report_t" + std::to_string(t) + ".csv");
    write_fwe_report_csv(run_campaign(s), path);
    csvs.push_back(slurp(path));
  }
  const bool same = csvs[0] == csvs[1] && csvs[0] == csvs[2] && !csvs[0].empty();

  const bool nifti = nifti_round_trips(dir);

  auto s = determinism_spec(dir);
  s.threads = o.threads;
  s.checkpoint_dir = dir / "ck";
  fs::remove_all(*s.checkpoint_dir);
  (void)run_campaign(s);
  // Interrupt: drop the second half of the records, then resume.
  for (std::size_t a = s.n_analyses / 2; a < s.n_analyses; ++a) {
    fs::remove(*s.checkpoint_dir / "cell0" / ("a" + std::to_string(a) + ".json"));
  }
  const auto resumed = run_campaign(s);
  const bool resume = fwe_report_csv(resumed) == csvs[0];

  verdict("C9", same && nifti && resume,
          std::string("report CSV at 1/4/8 threads: ") + (same ? "byte-identical" : "DIFFERENT") +
              "; NIfTI round trip, 5 datatypes, 3D and 4D: " + (nifti ? "bit-exact" : "MISMATCH") +
              "; resumed campaign: " + (resume ? "identical" : "DIFFERENT"));
}

bool wanted(const Options& o, int c) { return o.only.empty() || o.only.count(c) != 0; }

template <class F>
void guarded(const std::string& id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    verdict(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Acceptance suite"};
  app.add_option("--threads", o.threads, "worker threads");
  app.add_option("--workdir", o.workdir, "scratch directory for reports and checkpoints");
  app.add_flag("--resume", o.resume, "reuse checkpoints from an earlier run");
  app.add_option("--only", o.only, "run only these criteria (1-10)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  if (!o.resume) fs::remove_all(o.workdir);
  fs::create_directories(o.workdir);
  Stopwatch total;

  guarded("C6", [&] { if (wanted(o, 6)) criterion6(); });
  guarded("C5", [&] { if (wanted(o, 5)) criterion5(); });
  guarded("C8", [&] { if (wanted(o, 8)) criterion8(); });
  guarded("C9", [&] { if (wanted(o, 9)) criterion9(o); });
  if (wanted(o, 1) || wanted(o, 2) || wanted(o, 3) || wanted(o, 10)) {
    std::optional<Campaigns> c;
    guarded("C1-3,10", [&] { c = run_main_campaigns(o); });
    if (c) {
      guarded("C1", [&] { if (wanted(o, 1)) criterion1(*c); });
      guarded("C2", [&] { if (wanted(o, 2)) criterion2(*c); });
      guarded("C3", [&] { if (wanted(o, 3)) criterion3(*c); });
      guarded("C10", [&] { if (wanted(o, 10)) criterion10(*c); });
    }
  }
  guarded("C7", [&] { if (wanted(o, 7)) criterion7(o); });
  guarded("C4", [&] { if (wanted(o, 4)) criterion4(o); });
  if (o.only.empty()) guarded("V26", [&] { variant_corners26(o); });

  std::cout << (g_failed == 0 ? "ALL PASS" : std::to_string(g_failed) + " FAILED") << " ("
            << fmt("%.0f", total.seconds()) << " s)" << std::endl;
  return std::min(g_failed, 100);
}
