#include "fwe/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "fwe/distributions.hpp"
#include "fwe/error.hpp"
#include "fwe/geometry.hpp"
#include "fwe/mc.hpp"
#include "fwe/nifti.hpp"
#include "fwe/parallel.hpp"
#include "fwe/perm.hpp"
#include "fwe/random.hpp"
#include "fwe/rft.hpp"

namespace fwe {

namespace {

using json = nlohmann::json;

// Seed-path tags; changing them changes every campaign result.
constexpr std::uint64_t kTagPool = 1;
constexpr std::uint64_t kTagSplit = 2;
constexpr std::uint64_t kTagMc = 3;
constexpr std::uint64_t kTagPerm = 4;

struct Slot {
  Backend backend;
  int cdt = -1;  // index into spec.cdt; -1 for voxel and adhoc backends
};

struct AnalysisRecord {
  std::vector<int> flags;  // 1 significant, 0 not, -1 failed
  std::vector<std::string> errors;
  std::vector<RatioRow> ratios;
};

struct Cell {
  double smoothing = 0.0;
  KernelSpec kernel;
  SubjectStack pool;
  std::map<std::pair<int, int>, McNull> mc;  // (mode, cdt)
  std::map<std::pair<int, int>, std::string> mc_errors;
  std::string error;  // set when the pool itself could not be built
};

std::vector<Slot> make_slots(const CampaignSpec& spec) {
  std::vector<Slot> slots;
  for (auto b : spec.inference) {
    if (is_cluster_backend(b)) {
      for (std::size_t c = 0; c < spec.cdt.size(); ++c) slots.push_back({b, static_cast<int>(c)});
    } else {
      slots.push_back({b, -1});
    }
  }
  return slots;
}

bool uses(const CampaignSpec& spec, Backend b) {
  return std::find(spec.inference.begin(), spec.inference.end(), b) != spec.inference.end();
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_f(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Mask campaign_mask(const CampaignSpec& spec, const Grid& grid) {
  if (spec.mask_path) {
    auto m = Mask::from_volume(read_nifti3(*spec.mask_path));
    require_same_dims(m.grid(), grid);
    m.require_nonempty();
    return Mask(grid, std::vector<std::uint8_t>(m.flags().begin(), m.flags().end()));
  }
  auto m = make_ellipsoid_mask(grid.dims, grid.voxel_mm, spec.mask_semi_axes_mm);
  m.require_nonempty();
  return m;
}

Volume4 read_stack(const std::vector<std::filesystem::path>& paths) {
  if (paths.size() == 1) {
    auto any = read_nifti(paths.front());
    if (auto* v4 = std::get_if<Volume4>(&any)) return std::move(*v4);
    throw Error(Errc::invalid_argument, "a single input must be a 4D stack");
  }
  std::vector<Volume3> vols;
  for (const auto& p : paths) vols.push_back(read_nifti3(p));
  return Volume4::stack(vols);
}

Volume4 centered(const Volume4& v) {
  const std::size_t nv = v.frame_size();
  const auto n = static_cast<double>(v.frames());
  std::vector<double> mean(nv, 0.0);
  for (std::size_t t = 0; t < v.frames(); ++t) {
    const auto f = v.frame(t);
    for (std::size_t i = 0; i < nv; ++i) mean[i] += f[i];
  }
  for (auto& m : mean) m /= n;
  std::vector<double> out(v.data().begin(), v.data().end());
  for (std::size_t t = 0; t < v.frames(); ++t) {
    for (std::size_t i = 0; i < nv; ++i) out[t * nv + i] -= mean[i];
  }
  return Volume4(v.grid(), v.frames(), std::move(out));
}

SubjectStack build_pool(const CampaignSpec& spec, const Grid& grid, const Mask& mask, const KernelSpec& kernel) {
  const std::size_t n = spec.pool_size;
  std::unique_ptr<NonstationarityField> nonstat;
  if (spec.nonstat) {
    nonstat = std::make_unique<NonstationarityField>(NonstationarityField::blob(
        grid, spec.nonstat->center_vox, spec.nonstat->radius_mm, spec.nonstat->peak_gain));
  }
  std::vector<double> betas(n * grid.size());
  std::vector<double> vars;
  const bool first_level_mode = spec.data_source == DataSource::synthetic_first_level;
  if (first_level_mode) vars.resize(n * grid.size());
  FirstLevelSpec fl;
  if (first_level_mode) {
    fl.noise = spec.ar1;
    fl.paradigm = spec.paradigm.value_or(ParadigmSpec::standard(ParadigmSpec::Kind::B1, 2.0, 100));
    fl.drift_order = spec.drift_order;
  }
  parallel_for(n, spec.threads, [&](std::size_t j, unsigned) {
    const std::uint64_t seed = derive_seed(spec.seed, {kTagPool, j});
    if (first_level_mode) {
      auto r = first_level(fl, grid, kernel, mask, seed);
      std::copy(r.beta.data().begin(), r.beta.data().end(), betas.begin() + static_cast<std::ptrdiff_t>(j * grid.size()));
      std::copy(r.variance.data().begin(), r.variance.data().end(),
                vars.begin() + static_cast<std::ptrdiff_t>(j * grid.size()));
    } else {
      auto v = synth_null_subject(grid, kernel, mask, nonstat.get(), seed);
      std::copy(v.data().begin(), v.data().end(), betas.begin() + static_cast<std::ptrdiff_t>(j * grid.size()));
    }
  });
  SubjectStack pool{Volume4(grid, n, std::move(betas)), std::nullopt};
  if (first_level_mode) pool.variances = Volume4(grid, n, std::move(vars));
  return pool;
}

json record_to_json(const AnalysisRecord& r) {
  json j;
  j["flags"] = r.flags;
  j["errors"] = r.errors;
  json rows = json::array();
  for (const auto& x : r.ratios) {
    rows.push_back({x.dataset_tag, x.contrast_tag, x.cluster_size_voxels, x.parametric_p, x.nonparametric_p,
                    x.ratio});
  }
  j["ratios"] = rows;
  return j;
}

std::optional<AnalysisRecord> load_record(const std::filesystem::path& path, std::size_t n_slots) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    AnalysisRecord r;
    r.flags = j.at("flags").get<std::vector<int>>();
    r.errors = j.at("errors").get<std::vector<std::string>>();
    for (const auto& x : j.at("ratios")) {
      r.ratios.push_back({x.at(0).get<std::string>(), x.at(1).get<std::string>(), x.at(2).get<std::size_t>(),
                          x.at(3).get<double>(), x.at(4).get<double>(), x.at(5).get<double>()});
    }
    if (r.flags.size() != n_slots || r.errors.size() != n_slots) return std::nullopt;
    return r;
  } catch (const json::exception&) {
    return std::nullopt;  // torn or foreign record: recompute
  }
}

void store_record(const std::filesystem::path& path, const AnalysisRecord& r) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Errc::io_error, "cannot write checkpoint " + tmp);
    out << record_to_json(r).dump() << '\n';
    if (!out) throw Error(Errc::io_error, "failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, "cannot move checkpoint into place: " + ec.message());
}

struct AnalysisContext {
  const CampaignSpec& spec;
  const Mask& mask;
  const Cell& cell;
  const std::vector<Slot>& slots;
  std::string dataset_tag;
};

template <class Fn>
bool any_cluster(const Volume3& stat, double thr, const Mask& mask, Connectivity conn, std::span<const int> signs,
                 Fn&& significant) {
  for (int s : signs) {
    const auto table = label_clusters(stat, thr, mask, conn, s);
    for (const auto& c : table.clusters) {
      if (significant(c)) return true;
    }
  }
  return false;
}

AnalysisRecord run_analysis(const AnalysisContext& ctx, std::size_t a) {
  const auto& spec = ctx.spec;
  const auto& mask = ctx.mask;
  const Grid& grid = mask.grid();
  const std::size_t n_slots = ctx.slots.size();
  AnalysisRecord rec{std::vector<int>(n_slots, 0), std::vector<std::string>(n_slots), {}};

  auto fail_all = [&](const std::string& msg) {
    for (std::size_t k = 0; k < n_slots; ++k) {
      rec.flags[k] = -1;
      rec.errors[k] = msg;
    }
  };
  if (!ctx.cell.error.empty()) {
    fail_all(ctx.cell.error);
    return rec;
  }

  const std::uint64_t split_seed = derive_seed(spec.seed, {kTagSplit, a});
  const std::size_t pool_n = ctx.cell.pool.n_subjects();
  const bool two_sample = spec.test == TestKind::two_sample;
  const bool mema = spec.test == TestKind::mema;

  std::optional<SubjectStack> g1;
  std::optional<SubjectStack> g2;
  std::optional<GlmResult> glm;
  std::optional<SmoothnessEstimate> smooth;
  std::string smooth_error;
  try {
    if (two_sample) {
      const auto [i1, i2] = random_split(pool_n, spec.group_size, split_seed);
      g1 = select_subjects(ctx.cell.pool, i1);
      g2 = select_subjects(ctx.cell.pool, i2);
      glm = two_sample_t(*g1, *g2, mask);
    } else {
      if (spec.group_size > pool_n) throw Error(Errc::group_too_large, "group larger than the subject pool");
      Rng rng(split_seed);
      auto perm = rng.permutation(pool_n);
      perm.resize(spec.group_size);
      g1 = select_subjects(ctx.cell.pool, perm);
      glm = mema ? mema_t(*g1, mask) : one_sample_t(*g1, mask);
    }
  } catch (const Error& e) {
    fail_all(e.what());
    return rec;
  }
  try {
    smooth = estimate_fwhm_residuals(glm->residuals, mask, grid.voxel_mm);
  } catch (const Error& e) {
    smooth_error = e.what();
  }

  const double df = mema ? dist::kInfiniteDf : glm->df;
  const FieldKind kind = mema ? FieldKind::gaussian : FieldKind::student_t;
  const std::vector<int> signs = two_sample ? std::vector<int>{1, -1} : std::vector<int>{1};
  const double voxvol = grid.voxel_volume_mm3();
  const double nominal = spec.nominal_fwe;
  // Parametric backends split the level over the tested signs; permutation
  // backends get the same family control from the two-sided max null.
  const double per_sign = nominal / static_cast<double>(signs.size());

  double max_abs = -std::numeric_limits<double>::infinity();
  for (auto i : mask.indices()) {
    max_abs = std::max(max_abs, glm->stat[i]);
    if (two_sample) max_abs = std::max(max_abs, -glm->stat[i]);
  }

  std::optional<RftContext> rft;
  auto need_rft = [&]() -> const RftContext& {
    if (!smooth) throw Error(Errc::degenerate_residuals, smooth_error);
    if (!rft) rft = RftContext::from_mask(mask, *smooth, df, kind);
    return *rft;
  };

  std::optional<PermNull> perm;
  auto need_perm = [&]() -> const PermNull& {
    if (!perm) {
      PermOptions opt;
      if (uses(spec, Backend::perm_cluster)) opt.cdts = spec.cdt;
      opt.n_resamples = spec.n_resamples;
      opt.seed = derive_seed(spec.seed, {kTagPerm, a});
      opt.tail = two_sample ? Tail::two_sided : Tail::one_sided;
      opt.connectivity = spec.connectivity;
      opt.threads = 1;
      perm = two_sample ? perm_build_null(*g1, *g2, mask, opt) : perm_build_null(*g1, mask, opt);
    }
    return *perm;
  };

  for (std::size_t k = 0; k < n_slots; ++k) {
    const Slot& slot = ctx.slots[k];
    try {
      bool sig = false;
      switch (slot.backend) {
        case Backend::rft_voxel:
          sig = voxel_fwe_p(max_abs, need_rft()) < per_sign;
          break;
        case Backend::bonferroni_voxel:
          sig = bonferroni_p(max_abs, mask.n_inside(), df) < per_sign;
          break;
        case Backend::rft_cluster: {
          const auto& cdt = spec.cdt[static_cast<std::size_t>(slot.cdt)];
          const auto& r = need_rft();
          const double thr = cdt_stat_threshold(cdt, df);
          if (cdt.z_equivalent() < kMinClusterCdtZ) {
            throw Error(Errc::cdt_too_low, "cluster-defining threshold below z = 1.6");
          }
          sig = any_cluster(glm->stat, thr, mask, spec.connectivity, signs,
                            [&](const Cluster& c) { return cluster_fwe_p(c.size_voxels, cdt, r, voxvol) < per_sign; });
          break;
        }
        case Backend::mc_cluster_buggy:
        case Backend::mc_cluster_fixed: {
          const int mode = slot.backend == Backend::mc_cluster_buggy ? 0 : 1;
          const auto key = std::make_pair(mode, slot.cdt);
          if (auto it = ctx.cell.mc_errors.find(key); it != ctx.cell.mc_errors.end()) {
            throw std::runtime_error(it->second);
          }
          const McNull& null = ctx.cell.mc.at(key);
          const double thr = cdt_stat_threshold(spec.cdt[static_cast<std::size_t>(slot.cdt)], df);
          sig = any_cluster(glm->stat, thr, mask, spec.connectivity, signs,
                            [&](const Cluster& c) { return mc_cluster_fwe_p(c.size_voxels, null) < per_sign; });
          break;
        }
        case Backend::perm_voxel: {
          const auto& null = need_perm();
          double obs = -std::numeric_limits<double>::infinity();
          for (auto i : mask.indices()) {
            obs = std::max(obs, null.observed[i]);
            if (two_sample) obs = std::max(obs, -null.observed[i]);
          }
          sig = perm_voxel_fwe_p(obs, null) < nominal;
          break;
        }
        case Backend::perm_cluster: {
          const auto& null = need_perm();
          const auto c = static_cast<std::size_t>(slot.cdt);
          sig = any_cluster(null.observed, null.cdt_thresholds[c], mask, spec.connectivity, signs,
                            [&](const Cluster& cl) { return perm_cluster_fwe_p(cl.size_voxels, null, c) < nominal; });
          break;
        }
        case Backend::adhoc_extent: {
          const auto& ad = *spec.adhoc;
          const double thr = dist::t_isf(ad.cdt_p, df);
          const auto min_extent = static_cast<std::size_t>(std::ceil(ad.extent_mm3 / voxvol - 1e-9));
          sig = any_cluster(glm->stat, thr, mask, spec.connectivity, signs,
                            [&](const Cluster& c) { return c.size_voxels >= std::max<std::size_t>(1, min_extent); });
          break;
        }
      }
      rec.flags[k] = sig ? 1 : 0;
    } catch (const std::exception& e) {
      rec.flags[k] = -1;
      rec.errors[k] = e.what();
    }
  }

  // Ratio rows: both p-values for the clusters of the permutation engine's own t map.
  if (uses(spec, Backend::rft_cluster) && uses(spec, Backend::perm_cluster) && !mema) {
    try {
      const auto& null = need_perm();
      const auto& r = need_rft();
      for (std::size_t c = 0; c < spec.cdt.size(); ++c) {
        const auto& cdt = spec.cdt[c];
        if (cdt.z_equivalent() < kMinClusterCdtZ) continue;
        for (int s : signs) {
          const auto table = label_clusters(null.observed, null.cdt_thresholds[c], mask, spec.connectivity, s);
          std::vector<ClusterPPair> par;
          std::vector<ClusterPPair> non;
          for (const auto& cl : table.clusters) {
            par.push_back({cl.size_voxels, cl.peak_index, s, cluster_fwe_p(cl.size_voxels, cdt, r, voxvol)});
            non.push_back({cl.size_voxels, cl.peak_index, s, perm_cluster_fwe_p_signed(cl.size_voxels, null, c, s)});
          }
          const std::string contrast = std::string(s > 0 ? "pos" : "neg") + "@p" + format_g(cdt.p_value());
          auto rep = compare_backends(par, non, ctx.dataset_tag, contrast);
          rec.ratios.insert(rec.ratios.end(), rep.rows.begin(), rep.rows.end());
        }
      }
    } catch (const Error&) {
      // Failures are already recorded on the backend slots.
    }
  }
  return rec;
}

}  // namespace

const char* to_string(DataSource d) noexcept {
  switch (d) {
    case DataSource::synthetic_beta_maps: return "synthetic_beta_maps";
    case DataSource::synthetic_first_level: return "synthetic_first_level";
    case DataSource::external_nifti_stack: return "external_nifti_stack";
  }
  return "?";
}

const char* to_string(Backend b) noexcept {
  switch (b) {
    case Backend::rft_voxel: return "rft_voxel";
    case Backend::rft_cluster: return "rft_cluster";
    case Backend::bonferroni_voxel: return "bonferroni_voxel";
    case Backend::mc_cluster_buggy: return "mc_cluster_buggy";
    case Backend::mc_cluster_fixed: return "mc_cluster_fixed";
    case Backend::perm_voxel: return "perm_voxel";
    case Backend::perm_cluster: return "perm_cluster";
    case Backend::adhoc_extent: return "adhoc_extent";
  }
  return "?";
}

DataSource parse_data_source(const std::string& name) {
  for (auto d : {DataSource::synthetic_beta_maps, DataSource::synthetic_first_level,
                 DataSource::external_nifti_stack}) {
    if (name == to_string(d)) return d;
  }
  throw Error(Errc::invalid_argument, "unknown data source '" + name + "'");
}

Backend parse_backend(const std::string& name) {
  for (auto b : {Backend::rft_voxel, Backend::rft_cluster, Backend::bonferroni_voxel, Backend::mc_cluster_buggy,
                 Backend::mc_cluster_fixed, Backend::perm_voxel, Backend::perm_cluster, Backend::adhoc_extent}) {
    if (name == to_string(b)) return b;
  }
  throw Error(Errc::invalid_argument, "unknown inference backend '" + name + "'");
}

bool is_cluster_backend(Backend b) noexcept {
  return b == Backend::rft_cluster || b == Backend::mc_cluster_buggy || b == Backend::mc_cluster_fixed ||
         b == Backend::perm_cluster;
}

void AdhocSpec::validate() const {
  if (!(cdt_p > 0.0 && cdt_p < 1.0)) throw Error(Errc::invalid_argument, "adhoc CDT p must lie in (0, 1)");
  if (!(extent_mm3 > 0.0)) throw Error(Errc::invalid_argument, "adhoc extent must be positive");
}

std::string NonstatSpec::to_string() const {
  return "blob:" + format_g(center_vox[0]) + "," + format_g(center_vox[1]) + "," + format_g(center_vox[2]) +
         ":r" + format_g(radius_mm) + ":g" + format_g(peak_gain);
}

void CampaignSpec::validate() const {
  if (n_analyses < 1) throw Error(Errc::invalid_argument, "n_analyses must be at least 1");
  if (!(nominal_fwe > 0.0 && nominal_fwe < 1.0)) throw Error(Errc::invalid_argument, "nominal FWE must lie in (0, 1)");
  if (group_size < 2) throw Error(Errc::invalid_argument, "group_size must be at least 2");
  if (inference.empty()) throw Error(Errc::invalid_argument, "no inference backends requested");
  grid.validate();
  kernel.validate();
  for (double s : smoothing_fwhm_mm) {
    if (!(s > 0.0)) throw Error(Errc::invalid_argument, "smoothing FWHM values must be positive");
  }
  for (const auto& c : cdt) c.validate();
  const bool cluster = std::any_of(inference.begin(), inference.end(), is_cluster_backend);
  if (cluster && cdt.empty()) throw Error(Errc::invalid_argument, "cluster backends need at least one CDT");
  if (std::find(inference.begin(), inference.end(), Backend::adhoc_extent) != inference.end()) {
    if (!adhoc) throw Error(Errc::invalid_argument, "adhoc_extent needs an adhoc block");
    adhoc->validate();
  }
  if (test == TestKind::mema) {
    for (auto b : inference) {
      if (b == Backend::perm_voxel || b == Backend::perm_cluster) {
        throw Error(Errc::invalid_argument, "permutation backends do not support the mixed-effects test");
      }
    }
    const bool has_var = data_source == DataSource::synthetic_first_level ||
                         (data_source == DataSource::external_nifti_stack && !variance_paths.empty());
    if (!has_var) throw Error(Errc::missing_variances, "the mixed-effects test needs per-subject variance maps");
    if (group_size < 3) throw Error(Errc::too_few_subjects, "the mixed-effects test needs at least 3 subjects");
  }
  if (data_source == DataSource::external_nifti_stack) {
    if (pool_paths.empty()) throw Error(Errc::invalid_argument, "external data needs pool_paths");
  } else {
    if (pool_size < 2) throw Error(Errc::invalid_argument, "pool_size must be at least 2");
  }
  if (n_resamples < 1 || mc_iterations < 1) throw Error(Errc::invalid_argument, "resample counts must be positive");
  if (nonstat && (!(nonstat->radius_mm > 0.0) || !(nonstat->peak_gain > 0.0))) {
    throw Error(Errc::invalid_argument, "nonstationarity radius and gain must be positive");
  }
  if (data_source == DataSource::synthetic_first_level) {
    ar1.validate();
    if (paradigm) paradigm->validate();
  }
}

FweReport run_campaign(const CampaignSpec& spec) {
  spec.validate();
  const auto slots = make_slots(spec);

  // Data for every cell.
  std::optional<SubjectStack> external;
  Grid grid = spec.grid;
  if (spec.data_source == DataSource::external_nifti_stack) {
    SubjectStack s{read_stack(spec.pool_paths), std::nullopt};
    if (!spec.variance_paths.empty()) s.variances = read_stack(spec.variance_paths);
    s.validate();
    grid = s.betas.grid();
    external = std::move(s);
  }
  const Mask mask = spec.data_source == DataSource::external_nifti_stack && !spec.mask_path
                        ? Mask::from_volume(external->betas.frame_volume(0))
                        : campaign_mask(spec, grid);
  mask.require_nonempty();

  std::vector<double> smoothings = spec.smoothing_fwhm_mm;
  if (smoothings.empty() || external) smoothings = {external ? 0.0 : spec.kernel.fwhm_mm.front()};

  FweReport report;
  for (std::size_t ci = 0; ci < smoothings.size(); ++ci) {
    Cell cell;
    cell.smoothing = smoothings[ci];
    cell.kernel = external ? spec.kernel : spec.kernel.scaled(cell.smoothing / spec.kernel.fwhm_mm.front());
    try {
      if (external) {
        cell.pool = *external;
      } else {
        cell.pool = build_pool(spec, grid, mask, cell.kernel);
      }
    } catch (const std::exception& e) {
      cell.error = e.what();
    }

    if (cell.error.empty()) {
      for (int mode = 0; mode < 2; ++mode) {
        const Backend b = mode == 0 ? Backend::mc_cluster_buggy : Backend::mc_cluster_fixed;
        if (!uses(spec, b)) continue;
        for (std::size_t c = 0; c < spec.cdt.size(); ++c) {
          const auto key = std::make_pair(mode, static_cast<int>(c));
          try {
            auto est = estimate_fwhm_residuals(centered(cell.pool.betas), mask, grid.voxel_mm);
            est.source = SmoothnessSource::first_level_average;
            McOptions opt;
            opt.connectivity = spec.connectivity;
            opt.n_iterations = spec.mc_iterations;
            opt.mode = mode == 0 ? McMode::buggy_empirical_rescale : McMode::fixed_analytic_rescale;
            opt.seed = derive_seed(spec.seed, {kTagMc, c, static_cast<std::uint64_t>(mode)});
            opt.threads = spec.threads;
            cell.mc.emplace(key, mc_build_null(mask, kernel_from_smoothness(est), spec.cdt[c].z_equivalent(), opt));
          } catch (const std::exception& e) {
            cell.mc_errors[key] = e.what();
          }
        }
      }
    }

    std::filesystem::path cell_dir;
    if (spec.checkpoint_dir) {
      cell_dir = *spec.checkpoint_dir / ("cell" + std::to_string(ci));
      std::filesystem::create_directories(cell_dir);
    }
    const std::string dataset_tag = cell.kernel.to_string() + (spec.nonstat ? "+" + spec.nonstat->to_string() : "");
    const AnalysisContext actx{spec, mask, cell, slots, dataset_tag};
    std::vector<AnalysisRecord> records(spec.n_analyses);
    parallel_for(spec.n_analyses, spec.threads, [&](std::size_t a, unsigned) {
      std::filesystem::path path;
      if (spec.checkpoint_dir) {
        path = cell_dir / ("a" + std::to_string(a) + ".json");
        if (auto r = load_record(path, slots.size())) {
          records[a] = std::move(*r);
          return;
        }
      }
      records[a] = run_analysis(actx, a);
      if (spec.checkpoint_dir) store_record(path, records[a]);
    });

    for (std::size_t k = 0; k < slots.size(); ++k) {
      FweRow row;
      row.backend = slots[k].backend;
      row.test = spec.test;
      row.kernel = cell.kernel.to_string();
      row.nonstat = spec.nonstat ? spec.nonstat->to_string() : "none";
      row.smoothing_fwhm_mm = cell.smoothing;
      if (slots[k].cdt >= 0) row.cdt_p = spec.cdt[static_cast<std::size_t>(slots[k].cdt)].p_value();
      if (slots[k].backend == Backend::adhoc_extent) row.cdt_p = spec.adhoc->cdt_p;
      row.group_size = spec.group_size;
      row.n_analyses = spec.n_analyses;
      for (const auto& r : records) {
        if (r.flags[k] < 0 && !row.failed) {
          row.failed = true;
          row.error = r.errors[k];
        }
        row.n_significant += r.flags[k] == 1;
      }
      row.fwe_rate = static_cast<double>(row.n_significant) / static_cast<double>(row.n_analyses);
      std::tie(row.ci_low, row.ci_high) = binomial_ci(row.n_significant, row.n_analyses);
      report.rows.push_back(std::move(row));
    }
    for (const auto& r : records) {
      report.ratios.rows.insert(report.ratios.rows.end(), r.ratios.begin(), r.ratios.end());
    }
  }
  return report;
}

FweReport run_adhoc(const CampaignSpec& spec, const AdhocSpec& adhoc) {
  CampaignSpec s = spec;
  s.inference = {Backend::adhoc_extent};
  s.adhoc = adhoc;
  return run_campaign(s);
}

RatioReport compare_backends(std::span<const ClusterPPair> parametric, std::span<const ClusterPPair> nonparametric,
                             const std::string& dataset_tag, const std::string& contrast_tag) {
  if (parametric.size() != nonparametric.size()) {
    throw Error(Errc::mismatched_inputs, "backends report different cluster counts");
  }
  RatioReport out;
  for (std::size_t i = 0; i < parametric.size(); ++i) {
    const auto& p = parametric[i];
    const auto& q = nonparametric[i];
    if (p.size_voxels != q.size_voxels || p.peak_index != q.peak_index || p.sign != q.sign) {
      throw Error(Errc::mismatched_inputs, "backends report different clusters");
    }
    if (p.p < kRatioMinParametricP || p.p > kRatioMaxParametricP) continue;
    out.rows.push_back({dataset_tag, contrast_tag, p.size_voxels, p.p, q.p, q.p / p.p});
  }
  return out;
}

double RatioReport::median_ratio() const {
  if (rows.empty()) return std::nan("");
  std::vector<double> r;
  for (const auto& x : rows) r.push_back(x.ratio);
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  return n % 2 == 1 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
}

bool FweReport::any_failed() const noexcept {
  return std::any_of(rows.begin(), rows.end(), [](const FweRow& r) { return r.failed; });
}

const FweRow* FweReport::find(Backend b, std::optional<double> cdt_p, std::optional<double> smoothing) const {
  for (const auto& r : rows) {
    if (r.backend != b) continue;
    if (cdt_p && (!r.cdt_p || std::abs(*r.cdt_p - *cdt_p) > 1e-12)) continue;
    if (smoothing && std::abs(r.smoothing_fwhm_mm - *smoothing) > 1e-9) continue;
    return &r;
  }
  return nullptr;
}

std::pair<double, double> binomial_ci(std::size_t k, std::size_t n, double level) {
  return dist::clopper_pearson(k, n, level);
}

std::string fwe_report_csv(const FweReport& report) {
  std::ostringstream out;
  out << "backend,test,kernel,nonstat,smoothing_fwhm_mm,cdt_p,group_size,n_analyses,n_significant,fwe_rate,"
         "ci_low,ci_high\n";
  for (const auto& r : report.rows) {
    out << to_string(r.backend) << ',' << to_string(r.test) << ',' << csv_field(r.kernel) << ',' << csv_field(r.nonstat) << ','
        << format_g(r.smoothing_fwhm_mm) << ',' << (r.cdt_p ? format_g(*r.cdt_p) : "NA") << ',' << r.group_size
        << ',' << r.n_analyses << ',';
    if (r.failed) {
      out << "NA,NA,NA,NA\n";
    } else {
      out << r.n_significant << ',' << format_f(r.fwe_rate) << ',' << format_f(r.ci_low) << ','
          << format_f(r.ci_high) << '\n';
    }
  }
  return out.str();
}

void write_fwe_report_csv(const FweReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << fwe_report_csv(report);
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

void write_ratio_report_csv(const RatioReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << "dataset_tag,contrast_tag,cluster_size_voxels,parametric_p,nonparametric_p,ratio\n";
  char buf[96];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%.6g,%.6g,%.6g\n", r.cluster_size_voxels, r.parametric_p, r.nonparametric_p,
                  r.ratio);
    out << csv_field(r.dataset_tag) << ',' << csv_field(r.contrast_tag) << buf;
  }
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

}  // namespace fwe
