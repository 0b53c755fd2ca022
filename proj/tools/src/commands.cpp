#include "fwe_cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fwe/cluster.hpp"
#include "fwe/error.hpp"
#include "fwe/geometry.hpp"
#include "fwe/glm.hpp"
#include "fwe/harness.hpp"
#include "fwe/mc.hpp"
#include "fwe/nifti.hpp"
#include "fwe/perm.hpp"
#include "fwe/random.hpp"
#include "fwe/rft.hpp"
#include "fwe/synth.hpp"
#include "fwe_cli/config.hpp"

namespace fwe::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Dims parse_dims(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(static_cast<std::size_t>(std::stoul(item)));
    } catch (const std::exception&) {
      throw ConfigError("bad dimension list '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("dimensions need 1 or 3 values");
}

std::array<double, 3> parse_triple(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad number list '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("expected 1 or 3 comma-separated values");
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
}

/// "full", "ellipsoid" (semi-axes in mm) or a NIfTI path.
Mask make_mask(const std::string& spec, const Grid& grid, const std::array<double, 3>& semi_axes) {
  if (spec == "full") return Mask::full(grid);
  if (spec == "ellipsoid") return make_ellipsoid_mask(grid.dims, grid.voxel_mm, semi_axes);
  auto m = Mask::from_volume(read_nifti3(spec));
  require_same_dims(m.grid(), grid);
  return Mask(grid, std::vector<std::uint8_t>(m.flags().begin(), m.flags().end()));
}

Volume4 load_frames(const std::vector<std::string>& paths) {
  if (paths.size() == 1) {
    auto any = read_nifti(paths.front());
    if (auto* v4 = std::get_if<Volume4>(&any)) return std::move(*v4);
    std::vector<Volume3> one{std::get<Volume3>(std::move(any))};
    return Volume4::stack(one);
  }
  std::vector<Volume3> vols;
  for (const auto& p : paths) vols.push_back(read_nifti3(p));
  return Volume4::stack(vols);
}

std::vector<Volume3> load_maps(const std::vector<std::string>& paths) {
  const auto v = load_frames(paths);
  std::vector<Volume3> out;
  for (std::size_t t = 0; t < v.frames(); ++t) out.push_back(v.frame_volume(t));
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kernel = "gaussian:6";
  std::string dims = "48";
  double voxel = 2.0;
  std::size_t n = 1;
  std::uint64_t seed = 1;
  std::string out;
  std::string mask = "full";
  std::string semi_axes = "46,44,40";
  std::string paradigm;
  double tr = 2.0;
  std::size_t frames = 100;
  double rho = 0.3;
  double sigma = 1.0;
  std::size_t drift_order = 3;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  const auto kernel = KernelSpec::parse(a.kernel);
  Grid grid{parse_dims(a.dims), {a.voxel, a.voxel, a.voxel}};
  grid.validate();
  const Mask mask = make_mask(a.mask, grid, parse_triple(a.semi_axes));
  ensure_dir(a.out);
  std::optional<FirstLevelSpec> fl;
  if (!a.paradigm.empty()) {
    FirstLevelSpec f;
    f.paradigm = ParadigmSpec::standard(ParadigmSpec::parse_kind(a.paradigm), a.tr, a.frames);
    f.noise = {a.rho, a.sigma};
    f.drift_order = a.drift_order;
    fl = f;
  }
  for (std::size_t j = 0; j < a.n; ++j) {
    const std::uint64_t seed = derive_seed(a.seed, {1, j});
    char name[64];
    std::snprintf(name, sizeof name, "subj_%03zu.nii", j);
    const fs::path path = fs::path(a.out) / name;
    if (fl) {
      const auto r = first_level(*fl, grid, kernel, mask, seed);
      write_nifti(r.beta, path);
      std::snprintf(name, sizeof name, "subj_%03zu_var.nii", j);
      write_nifti(r.variance, fs::path(a.out) / name);
    } else {
      write_nifti(synth_null_subject(grid, kernel, mask, nullptr, seed), path);
    }
    out << path.string() << " seed=" << hex(seed) << '\n';
  }
  err << "wrote " << a.n << " volume(s) to " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> group1;
  std::vector<std::string> group2;
  std::vector<std::string> inputs;
  std::vector<std::string> variances;
  std::string test = "two_sample";
  std::vector<std::string> backends{"rft_cluster"};
  std::vector<double> cdt{0.01};
  std::string mask;
  std::string connectivity = "faces6";
  std::uint64_t seed = 1;
  std::size_t n_resamples = 1000;
  std::size_t mc_iterations = 1000;
  double nominal = 0.05;
  std::string out;
  std::string manifest;
};

json analyze_manifest(const AnalyzeArgs& a) {
  return {{"command", "analyze"},     {"group1", a.group1},         {"group2", a.group2},
          {"inputs", a.inputs},       {"variances", a.variances},   {"test", a.test},
          {"backends", a.backends},   {"cdt", a.cdt},               {"mask", a.mask},
          {"connectivity", a.connectivity}, {"seed", a.seed},       {"n_resamples", a.n_resamples},
          {"mc_iterations", a.mc_iterations}, {"nominal_fwe", a.nominal}};
}

AnalyzeArgs analyze_from_manifest(const fs::path& path, const std::string& out) {
  const auto j = read_json_file(path);
  AnalyzeArgs a;
  try {
    if (j.at("command") != "analyze") throw ConfigError("manifest is not from analyze");
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known{"command", "group1", "group2", "inputs", "variances",
                                               "test", "backends", "cdt", "mask", "connectivity", "seed",
                                               "n_resamples", "mc_iterations", "nominal_fwe"};
      if (!known.count(key)) throw ConfigError("manifest: unknown key '" + key + "'");
    }
    a.group1 = j.at("group1").get<std::vector<std::string>>();
    a.group2 = j.at("group2").get<std::vector<std::string>>();
    a.inputs = j.at("inputs").get<std::vector<std::string>>();
    a.variances = j.at("variances").get<std::vector<std::string>>();
    a.test = j.at("test").get<std::string>();
    a.backends = j.at("backends").get<std::vector<std::string>>();
    a.cdt = j.at("cdt").get<std::vector<double>>();
    a.mask = j.at("mask").get<std::string>();
    a.connectivity = j.at("connectivity").get<std::string>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.n_resamples = j.at("n_resamples").get<std::size_t>();
    a.mc_iterations = j.at("mc_iterations").get<std::size_t>();
    a.nominal = j.at("nominal_fwe").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  a.out = out;
  return a;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const TestKind test = parse_test_kind(a.test);
  const Connectivity conn = parse_connectivity(a.connectivity);
  std::vector<Backend> backends;
  for (const auto& b : a.backends) {
    const auto be = parse_backend(b);
    if (be == Backend::adhoc_extent) throw ConfigError("adhoc_extent is a campaign-only backend");
    if (test == TestKind::mema && (be == Backend::perm_voxel || be == Backend::perm_cluster)) {
      throw ConfigError("permutation backends do not support the mixed-effects test");
    }
    backends.push_back(be);
  }
  std::vector<CdtSpec> cdts;
  for (double p : a.cdt) cdts.push_back(CdtSpec::from_p(p));
  if (a.out.empty()) throw ConfigError("--out is required");

  std::optional<SubjectStack> s1;
  std::optional<SubjectStack> s2;
  if (test == TestKind::two_sample) {
    if (a.group1.empty() || a.group2.empty()) throw ConfigError("two-sample analysis needs --group1 and --group2");
    s1 = SubjectStack{load_frames(a.group1), std::nullopt};
    s2 = SubjectStack{load_frames(a.group2), std::nullopt};
    require_same_dims(s1->betas.grid(), s2->betas.grid());
  } else {
    if (a.inputs.size() < 2 && !(a.inputs.size() == 1)) throw ConfigError("analysis needs at least 2 inputs");
    if (a.inputs.empty()) throw ConfigError("analysis needs --inputs");
    s1 = SubjectStack{load_frames(a.inputs), std::nullopt};
    if (!a.variances.empty()) s1->variances = load_frames(a.variances);
  }
  const Grid grid = s1->betas.grid();
  const Mask mask = a.mask.empty() ? Mask::from_volume(s1->betas.frame_volume(0)) : make_mask(a.mask, grid, {1, 1, 1});
  mask.require_nonempty();

  GlmResult glm = test == TestKind::two_sample ? two_sample_t(*s1, *s2, mask)
                  : test == TestKind::mema     ? mema_t(*s1, mask)
                                               : one_sample_t(*s1, mask);
  const double df = test == TestKind::mema ? dist::kInfiniteDf : glm.df;
  const FieldKind kind = test == TestKind::mema ? FieldKind::gaussian : FieldKind::student_t;
  const std::vector<int> signs = test == TestKind::two_sample ? std::vector<int>{1, -1} : std::vector<int>{1};
  const double voxvol = grid.voxel_volume_mm3();

  ensure_dir(a.out);
  write_nifti(glm.stat, fs::path(a.out) / "stat.nii");

  std::optional<SmoothnessEstimate> smooth;
  auto need_smooth = [&]() -> const SmoothnessEstimate& {
    if (!smooth) smooth = estimate_fwhm_residuals(glm.residuals, mask, grid.voxel_mm);
    return *smooth;
  };
  std::optional<PermNull> perm;
  auto need_perm = [&]() -> const PermNull& {
    if (!perm) {
      PermOptions opt;
      opt.cdts = cdts;
      opt.n_resamples = a.n_resamples;
      opt.seed = a.seed;
      opt.tail = test == TestKind::two_sample ? Tail::two_sided : Tail::one_sided;
      opt.connectivity = conn;
      perm = test == TestKind::two_sample ? perm_build_null(*s1, *s2, mask, opt) : perm_build_null(*s1, mask, opt);
    }
    return *perm;
  };

  json summary = json::object();
  for (const auto be : backends) {
    const std::string name = to_string(be);
    if (!is_cluster_backend(be)) {
      std::vector<double> pmap(grid.size(), 1.0);
      const Volume3* stat = &glm.stat;
      std::optional<RftContext> ctx;
      if (be == Backend::rft_voxel) ctx = RftContext::from_mask(mask, need_smooth(), df, kind);
      if (be == Backend::perm_voxel) stat = &need_perm().observed;
      std::size_t n_sig = 0;
      for (auto i : mask.indices()) {
        const double v = test == TestKind::two_sample ? std::abs((*stat)[i]) : (*stat)[i];
        double p = 1.0;
        if (be == Backend::rft_voxel) p = voxel_fwe_p(v, *ctx);
        if (be == Backend::bonferroni_voxel) p = bonferroni_p(v, mask.n_inside(), df);
        if (be == Backend::perm_voxel) p = perm_voxel_fwe_p(v, *perm);
        pmap[i] = p;
        n_sig += p < a.nominal;
      }
      write_nifti(Volume3(grid, std::move(pmap)), fs::path(a.out) / ("pfwe_" + name + ".nii"));
      summary[name] = {{"significant_voxels", n_sig}};
      continue;
    }
    std::vector<ClusterTable> tables;
    std::size_t n_sig = 0;
    for (std::size_t c = 0; c < cdts.size(); ++c) {
      const auto& cdt = cdts[c];
      std::optional<RftContext> ctx;
      std::optional<McNull> mc;
      const Volume3* stat = &glm.stat;
      double thr = cdt_stat_threshold(cdt, df);
      if (be == Backend::rft_cluster) ctx = RftContext::from_mask(mask, need_smooth(), df, kind);
      if (be == Backend::mc_cluster_buggy || be == Backend::mc_cluster_fixed) {
        McOptions opt;
        opt.connectivity = conn;
        opt.n_iterations = a.mc_iterations;
        opt.mode = be == Backend::mc_cluster_buggy ? McMode::buggy_empirical_rescale : McMode::fixed_analytic_rescale;
        opt.seed = derive_seed(a.seed, {3, c});
        mc = mc_build_null(mask, kernel_from_smoothness(need_smooth()), cdt.z_equivalent(), opt);
      }
      if (be == Backend::perm_cluster) {
        stat = &need_perm().observed;
        thr = perm->cdt_thresholds[c];
      }
      for (int s : signs) {
        auto table = label_clusters(*stat, thr, mask, conn, s);
        for (auto& cl : table.clusters) {
          if (be == Backend::rft_cluster) cl.fwe_p = cluster_fwe_p(cl.size_voxels, cdt, *ctx, voxvol);
          if (mc) cl.fwe_p = mc_cluster_fwe_p(cl.size_voxels, *mc);
          if (be == Backend::perm_cluster) cl.fwe_p = perm_cluster_fwe_p(cl.size_voxels, *perm, c);
          n_sig += *cl.fwe_p < a.nominal;
        }
        tables.push_back(std::move(table));
      }
    }
    write_cluster_csv(tables, fs::path(a.out) / ("clusters_" + name + ".csv"));
    summary[name] = {{"significant_clusters", n_sig}};
  }
  write_text(fs::path(a.out) / "manifest.json", analyze_manifest(a).dump(2) + "\n");
  out << summary.dump() << '\n';
  err << "analysis written to " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct McArgs {
  std::string dims = "48";
  double voxel = 2.0;
  std::string mask = "full";
  std::string semi_axes = "46,44,40";
  std::string kernel = "gaussian:8";
  std::optional<double> cdt_p;
  std::optional<double> cdt_z;
  std::size_t iterations = 1000;
  std::string mode = "fixed";
  std::string connectivity = "faces6";
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double target = 0.05;
  std::string out;
};

int cmd_mc_null(const McArgs& a, std::ostream& out, std::ostream& err) {
  Grid grid{parse_dims(a.dims), {a.voxel, a.voxel, a.voxel}};
  grid.validate();
  const Mask mask = make_mask(a.mask, grid, parse_triple(a.semi_axes));
  mask.require_nonempty();
  if (a.cdt_p.has_value() == a.cdt_z.has_value()) throw ConfigError("give exactly one of --cdt-p or --cdt-z");
  const CdtSpec cdt = a.cdt_p ? CdtSpec::from_p(*a.cdt_p) : CdtSpec::from_z(*a.cdt_z);
  McOptions opt;
  opt.connectivity = parse_connectivity(a.connectivity);
  opt.n_iterations = a.iterations;
  if (a.mode == "buggy") {
    opt.mode = McMode::buggy_empirical_rescale;
  } else if (a.mode == "fixed") {
    opt.mode = McMode::fixed_analytic_rescale;
  } else {
    throw ConfigError("--mode must be buggy or fixed");
  }
  opt.seed = a.seed;
  opt.threads = a.threads;
  const auto null = mc_build_null(mask, KernelSpec::parse(a.kernel), cdt.z_equivalent(), opt);
  if (!a.out.empty()) write_mc_null(null, a.out);
  const auto thr = mc_extent_threshold(null, a.target);
  out << json{{"mode", to_string(null.mode)}, {"iterations", null.n_iterations()}, {"cdt_z", null.cdt_z},
              {"threshold_voxels", thr}, {"threshold_mm3", static_cast<double>(thr) * grid.voxel_volume_mm3()}}
             .dump()
      << '\n';
  err << "simulated " << null.n_iterations() << " fields\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CampaignArgs {
  std::string config;
  std::string out;
  std::string ratio_out;
  std::string checkpoint;
  bool resume = false;
  bool strict = false;
  unsigned threads = 0;
};

int cmd_campaign(const CampaignArgs& a, std::ostream& out, std::ostream& err) {
  CampaignSpec spec = load_campaign_config(a.config);
  if (a.threads > 0) spec.threads = a.threads;
  if (!a.checkpoint.empty()) spec.checkpoint_dir = a.checkpoint;
  if (a.resume && !spec.checkpoint_dir) throw ConfigError("--resume needs a checkpoint directory");
  if (spec.checkpoint_dir && !a.resume) {
    // A fresh run must not pick up records from an earlier campaign.
    std::error_code ec;
    fs::remove_all(*spec.checkpoint_dir, ec);
    if (ec) throw Error(Errc::io_error, "cannot clear " + spec.checkpoint_dir->string());
  }
  err << "campaign: " << spec.n_analyses << " analyses x "
      << std::max<std::size_t>(1, spec.smoothing_fwhm_mm.size()) << " cell(s)\n";
  const auto report = run_campaign(spec);
  const std::string csv = fwe_report_csv(report);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
  }
  if (!a.ratio_out.empty()) write_ratio_report_csv(report.ratios, a.ratio_out);
  for (const auto& r : report.rows) {
    if (r.failed) err << "failed: " << to_string(r.backend) << ": " << r.error << '\n';
  }
  if (a.strict && report.any_failed()) return kExitStrictFailure;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SacfArgs {
  std::vector<std::string> inputs;
  std::string mask;
  double max_lag = 20.0;
  std::string out;
};

int cmd_sacf(const SacfArgs& a, std::ostream& out, std::ostream& err) {
  const auto maps = load_maps(a.inputs);
  const Grid grid = maps.front().grid();
  const Mask mask = a.mask.empty() ? Mask::full(grid) : make_mask(a.mask, grid, {1, 1, 1});
  mask.require_nonempty();
  const auto curve = estimate_sacf(maps, mask, a.max_lag);
  if (!a.out.empty()) {
    write_sacf_csv(curve, a.out);
  } else {
    out << "distance_mm,correlation\n0,1\n";
    for (std::size_t i = 0; i < curve.distances_mm.size(); ++i) {
      out << curve.distances_mm[i] << ',' << curve.correlation[i] << '\n';
    }
  }
  const double sigma = fit_sacf_sigma(curve);
  err << json{{"sigma_mm", sigma}, {"fwhm_mm", sacf_sigma_to_fwhm(sigma)}, {"n_maps", curve.n_maps}}.dump() << '\n';
  if (!a.out.empty()) {
    out << json{{"sigma_mm", sigma}, {"fwhm_mm", sacf_sigma_to_fwhm(sigma)}, {"n_maps", curve.n_maps}}.dump()
        << '\n';
  }
  return kExitOk;
}

struct SmoothnessArgs {
  std::vector<std::string> inputs;
  std::string mask;
  std::string out_dir;
};

int cmd_smoothness(const SmoothnessArgs& a, std::ostream& out, std::ostream& err) {
  const auto frames = load_frames(a.inputs);
  const Grid grid = frames.grid();
  const Mask mask = a.mask.empty() ? Mask::from_volume(frames.frame_volume(0)) : make_mask(a.mask, grid, {1, 1, 1});
  mask.require_nonempty();
  ensure_dir(a.out_dir);
  std::vector<Volume3> maps;
  for (std::size_t t = 0; t < frames.frames(); ++t) maps.push_back(frames.frame_volume(t));
  const auto rough = roughness_map(maps, mask);
  write_nifti(rough.roughness, fs::path(a.out_dir) / "roughness.nii");
  write_nifti(rough.inverse_roughness, fs::path(a.out_dir) / "inverse_roughness.nii");
  json j = {{"n_maps", frames.frames()}};
  if (frames.frames() >= 3) {
    // Inputs are treated as a group; residuals are deviations from the group mean.
    const std::size_t nv = grid.size();
    std::vector<double> mean(nv, 0.0);
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      for (std::size_t i = 0; i < nv; ++i) mean[i] += frames.frame(t)[i];
    }
    std::vector<double> resid(frames.data().begin(), frames.data().end());
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      for (std::size_t i = 0; i < nv; ++i) resid[t * nv + i] -= mean[i] / static_cast<double>(frames.frames());
    }
    const auto est = estimate_fwhm_residuals(Volume4(grid, frames.frames(), std::move(resid)), mask, grid.voxel_mm);
    j["fwhm_mm"] = est.fwhm_mm;
    j["resels"] = est.resels;
  }
  write_text(fs::path(a.out_dir) / "smoothness.json", j.dump(2) + "\n");
  out << j.dump() << '\n';
  err << "smoothness maps written to " << a.out_dir << '\n';
  return kExitOk;
}

struct IncidenceArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_incidence(const IncidenceArgs& a, std::ostream& out, std::ostream&) {
  std::vector<Mask> masks;
  for (const auto& p : a.inputs) masks.push_back(Mask::from_volume(read_nifti3(p)));
  const auto inc = cluster_incidence_map(masks);
  write_nifti(inc, a.out);
  double peak = 0.0;
  for (double v : inc.data()) peak = std::max(peak, v);
  out << json{{"n_maps", masks.size()}, {"max_incidence", peak}}.dump() << '\n';
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::invalid_argument:
      return kExitConfig;
    case Errc::io_error:
    case Errc::unsupported_datatype:
    case Errc::malformed_header:
    case Errc::truncated_data:
    case Errc::requires_scaling:
      return kExitIo;
    case Errc::dim_mismatch:
      return kExitConfig;
    default:
      return is_statistical_precondition(e.code()) ? kExitPrecondition : kExitConfig;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Familywise error calibration for neuroimaging cluster and voxel inference", "fwe"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic null volumes");
  s->add_option("--kernel", synth.kernel, "gaussian:<fwhm> or mix:<f1,f2>:<w1,w2>");
  s->add_option("--dims", synth.dims, "N or X,Y,Z");
  s->add_option("--voxel", synth.voxel, "voxel edge in mm");
  s->add_option("--n", synth.n, "number of subjects");
  s->add_option("--seed", synth.seed);
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--mask", synth.mask, "full, ellipsoid or a NIfTI path");
  s->add_option("--semi-axes", synth.semi_axes, "ellipsoid semi-axes in mm");
  s->add_option("--paradigm", synth.paradigm, "B1, B2, E1 or E2: simulate first-level fits");
  s->add_option("--tr", synth.tr);
  s->add_option("--frames", synth.frames);
  s->add_option("--ar1-rho", synth.rho);
  s->add_option("--ar1-sigma", synth.sigma);
  s->add_option("--drift-order", synth.drift_order);

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Group analysis with FWE-corrected clusters");
  an->add_option("--group1", analyze.group1);
  an->add_option("--group2", analyze.group2);
  an->add_option("--inputs", analyze.inputs);
  an->add_option("--variances", analyze.variances);
  an->add_option("--test", analyze.test, "one_sample, two_sample or mema");
  an->add_option("--backend", analyze.backends)->delimiter(',');
  an->add_option("--cdt", analyze.cdt, "cluster-defining p values")->delimiter(',');
  an->add_option("--mask", analyze.mask);
  an->add_option("--connectivity", analyze.connectivity);
  an->add_option("--seed", analyze.seed);
  an->add_option("--n-resamples", analyze.n_resamples);
  an->add_option("--mc-iterations", analyze.mc_iterations);
  an->add_option("--nominal-fwe", analyze.nominal);
  an->add_option("--out", analyze.out)->required();
  an->add_option("--manifest", analyze.manifest, "re-run from a manifest written by an earlier analysis");

  McArgs mc;
  auto* m = app.add_subcommand("mc-null", "Simulate a Monte Carlo cluster-extent null");
  m->add_option("--dims", mc.dims);
  m->add_option("--voxel", mc.voxel);
  m->add_option("--mask", mc.mask);
  m->add_option("--semi-axes", mc.semi_axes);
  m->add_option("--kernel", mc.kernel);
  m->add_option("--cdt-p", mc.cdt_p);
  m->add_option("--cdt-z", mc.cdt_z);
  m->add_option("--iterations", mc.iterations);
  m->add_option("--mode", mc.mode, "buggy or fixed");
  m->add_option("--connectivity", mc.connectivity);
  m->add_option("--seed", mc.seed);
  m->add_option("--threads", mc.threads);
  m->add_option("--target", mc.target, "FWE level for the reported extent threshold");
  m->add_option("--out", mc.out, "binary sidecar path");

  CampaignArgs camp;
  auto* c = app.add_subcommand("campaign", "Run a null campaign from a JSON config");
  c->add_option("--config", camp.config)->required();
  c->add_option("--out", camp.out, "FWE report CSV (stdout if omitted)");
  c->add_option("--ratio-out", camp.ratio_out, "ratio report CSV");
  c->add_option("--checkpoint", camp.checkpoint, "checkpoint directory");
  c->add_flag("--resume", camp.resume, "reuse existing checkpoint records");
  c->add_flag("--strict", camp.strict, "exit 5 when any cell failed");
  c->add_option("--threads", camp.threads);

  SacfArgs sacf;
  auto* sa = app.add_subcommand("sacf", "Spatial autocorrelation along x, y and z");
  sa->add_option("inputs", sacf.inputs)->required();
  sa->add_option("--mask", sacf.mask);
  sa->add_option("--max-lag", sacf.max_lag, "mm");
  sa->add_option("--out", sacf.out, "CSV path");

  SmoothnessArgs sm;
  auto* so = app.add_subcommand("smoothness", "Roughness maps and FWHM estimate");
  so->add_option("inputs", sm.inputs)->required();
  so->add_option("--mask", sm.mask);
  so->add_option("--out-dir", sm.out_dir)->required();

  IncidenceArgs inc;
  auto* ic = app.add_subcommand("incidence", "Voxel-wise count over binary cluster maps");
  ic->add_option("inputs", inc.inputs)->required();
  ic->add_option("--out", inc.out)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (an->parsed()) {
      if (!analyze.manifest.empty()) return cmd_analyze(analyze_from_manifest(analyze.manifest, analyze.out), out, err);
      return cmd_analyze(analyze, out, err);
    }
    if (m->parsed()) return cmd_mc_null(mc, out, err);
    if (c->parsed()) return cmd_campaign(camp, out, err);
    if (sa->parsed()) return cmd_sacf(sacf, out, err);
    if (so->parsed()) return cmd_smoothness(sm, out, err);
    if (ic->parsed()) return cmd_incidence(inc, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace fwe::cli
