#include "fwe_cli/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "fwe/error.hpp"

namespace fwe::cli {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void maybe(const json& obj, const char* key, const std::string& where, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

template <class T, std::size_t N>
std::array<T, N> get_array(const json& obj, const char* key, const std::string& where) {
  const auto v = get<std::vector<T>>(obj, key, where);
  if (v.size() != N) throw ConfigError(where + "." + key + ": expected " + std::to_string(N) + " values");
  std::array<T, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

CdtSpec parse_cdt(const json& j, const std::string& where) {
  if (j.is_number()) return CdtSpec::from_p(j.get<double>());
  only_keys(j, where, {"p", "z"});
  if (j.contains("p") == j.contains("z")) throw ConfigError(where + ": give exactly one of p or z");
  return j.contains("p") ? CdtSpec::from_p(get<double>(j, "p", where)) : CdtSpec::from_z(get<double>(j, "z", where));
}

template <class Fn>
auto wrap(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == Errc::invalid_argument) throw ConfigError(where + ": " + e.what());
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

CampaignSpec campaign_from_json(const json& doc, const std::filesystem::path& base_dir) {
  const std::string w = "config";
  only_keys(doc, w,
            {"data_source", "n_analyses", "test", "group_size", "smoothing_fwhm_mm", "cdt", "inference", "paradigm",
             "kernel", "nonstat", "nominal_fwe", "seed", "grid", "mask", "pool_size", "n_resamples", "mc_iterations",
             "connectivity", "adhoc", "ar1", "drift_order", "pool_paths", "variance_paths", "threads",
             "checkpoint_dir"});
  CampaignSpec s;
  wrap(w, [&] {
    if (doc.contains("data_source")) s.data_source = parse_data_source(get<std::string>(doc, "data_source", w));
    maybe(doc, "n_analyses", w, s.n_analyses);
    if (doc.contains("test")) s.test = parse_test_kind(get<std::string>(doc, "test", w));
    maybe(doc, "group_size", w, s.group_size);
    maybe(doc, "smoothing_fwhm_mm", w, s.smoothing_fwhm_mm);
    if (doc.contains("cdt")) {
      const auto& arr = doc.at("cdt");
      if (!arr.is_array()) throw ConfigError("config.cdt: expected an array");
      s.cdt.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) s.cdt.push_back(parse_cdt(arr[i], "config.cdt[" + std::to_string(i) + "]"));
    }
    if (doc.contains("inference")) {
      s.inference.clear();
      for (const auto& b : get<std::vector<std::string>>(doc, "inference", w)) s.inference.push_back(parse_backend(b));
    }
    if (doc.contains("paradigm")) {
      const auto& p = doc.at("paradigm");
      const std::string pw = w + ".paradigm";
      only_keys(p, pw, {"kind", "tr_s", "n_frames", "activity_s", "rest_s", "activity_max_s", "rest_max_s"});
      auto ps = ParadigmSpec::standard(ParadigmSpec::parse_kind(get<std::string>(p, "kind", pw)), 2.0, 100);
      maybe(p, "tr_s", pw, ps.tr_s);
      maybe(p, "n_frames", pw, ps.n_frames);
      maybe(p, "activity_s", pw, ps.activity_s);
      maybe(p, "rest_s", pw, ps.rest_s);
      maybe(p, "activity_max_s", pw, ps.activity_max_s);
      maybe(p, "rest_max_s", pw, ps.rest_max_s);
      s.paradigm = ps;
    }
    if (doc.contains("kernel")) s.kernel = KernelSpec::parse(get<std::string>(doc, "kernel", w));
    if (doc.contains("nonstat")) {
      const auto& n = doc.at("nonstat");
      const std::string nw = w + ".nonstat";
      only_keys(n, nw, {"center_vox", "radius_mm", "peak_gain"});
      NonstatSpec ns;
      ns.center_vox = get_array<double, 3>(n, "center_vox", nw);
      maybe(n, "radius_mm", nw, ns.radius_mm);
      maybe(n, "peak_gain", nw, ns.peak_gain);
      s.nonstat = ns;
    }
    maybe(doc, "nominal_fwe", w, s.nominal_fwe);
    maybe(doc, "seed", w, s.seed);
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      const std::string gw = w + ".grid";
      only_keys(g, gw, {"dims", "voxel_mm"});
      s.grid.dims = get_array<std::size_t, 3>(g, "dims", gw);
      if (g.contains("voxel_mm")) s.grid.voxel_mm = get_array<double, 3>(g, "voxel_mm", gw);
    }
    if (doc.contains("mask")) {
      const auto& m = doc.at("mask");
      const std::string mw = w + ".mask";
      only_keys(m, mw, {"semi_axes_mm", "path"});
      if (m.contains("semi_axes_mm")) s.mask_semi_axes_mm = get_array<double, 3>(m, "semi_axes_mm", mw);
      if (m.contains("path")) s.mask_path = resolve(base_dir, get<std::string>(m, "path", mw));
    }
    maybe(doc, "pool_size", w, s.pool_size);
    maybe(doc, "n_resamples", w, s.n_resamples);
    maybe(doc, "mc_iterations", w, s.mc_iterations);
    if (doc.contains("connectivity")) s.connectivity = parse_connectivity(get<std::string>(doc, "connectivity", w));
    if (doc.contains("adhoc")) {
      const auto& a = doc.at("adhoc");
      const std::string aw = w + ".adhoc";
      only_keys(a, aw, {"cdt_p", "extent_mm3"});
      AdhocSpec ad;
      maybe(a, "cdt_p", aw, ad.cdt_p);
      maybe(a, "extent_mm3", aw, ad.extent_mm3);
      s.adhoc = ad;
    }
    if (doc.contains("ar1")) {
      const auto& a = doc.at("ar1");
      const std::string aw = w + ".ar1";
      only_keys(a, aw, {"rho", "sigma"});
      maybe(a, "rho", aw, s.ar1.rho);
      maybe(a, "sigma", aw, s.ar1.sigma);
    }
    maybe(doc, "drift_order", w, s.drift_order);
    for (const auto& p : doc.value("pool_paths", std::vector<std::string>{})) s.pool_paths.push_back(resolve(base_dir, p));
    for (const auto& p : doc.value("variance_paths", std::vector<std::string>{})) {
      s.variance_paths.push_back(resolve(base_dir, p));
    }
    maybe(doc, "threads", w, s.threads);
    if (doc.contains("checkpoint_dir")) s.checkpoint_dir = resolve(base_dir, get<std::string>(doc, "checkpoint_dir", w));
    s.validate();
    return 0;
  });
  return s;
}

json campaign_to_json(const CampaignSpec& s) {
  json j;
  j["data_source"] = to_string(s.data_source);
  j["n_analyses"] = s.n_analyses;
  j["test"] = to_string(s.test);
  j["group_size"] = s.group_size;
  j["smoothing_fwhm_mm"] = s.smoothing_fwhm_mm;
  json cdts = json::array();
  for (const auto& c : s.cdt) {
    cdts.push_back(c.p_uncorrected ? json{{"p", *c.p_uncorrected}} : json{{"z", *c.z_equivalent_value}});
  }
  j["cdt"] = cdts;
  json inf = json::array();
  for (auto b : s.inference) inf.push_back(to_string(b));
  j["inference"] = inf;
  if (s.paradigm) {
    const auto& p = *s.paradigm;
    j["paradigm"] = {{"kind", to_string(p.kind)}, {"tr_s", p.tr_s}, {"n_frames", p.n_frames},
                     {"activity_s", p.activity_s}, {"rest_s", p.rest_s}, {"activity_max_s", p.activity_max_s},
                     {"rest_max_s", p.rest_max_s}};
  }
  j["kernel"] = s.kernel.to_string();
  if (s.nonstat) {
    j["nonstat"] = {{"center_vox", s.nonstat->center_vox}, {"radius_mm", s.nonstat->radius_mm},
                    {"peak_gain", s.nonstat->peak_gain}};
  }
  j["nominal_fwe"] = s.nominal_fwe;
  j["seed"] = s.seed;
  j["grid"] = {{"dims", s.grid.dims}, {"voxel_mm", s.grid.voxel_mm}};
  json mask = {{"semi_axes_mm", s.mask_semi_axes_mm}};
  if (s.mask_path) mask["path"] = s.mask_path->string();
  j["mask"] = mask;
  j["pool_size"] = s.pool_size;
  j["n_resamples"] = s.n_resamples;
  j["mc_iterations"] = s.mc_iterations;
  j["connectivity"] = to_string(s.connectivity);
  if (s.adhoc) j["adhoc"] = {{"cdt_p", s.adhoc->cdt_p}, {"extent_mm3", s.adhoc->extent_mm3}};
  j["ar1"] = {{"rho", s.ar1.rho}, {"sigma", s.ar1.sigma}};
  j["drift_order"] = s.drift_order;
  if (!s.pool_paths.empty()) {
    std::vector<std::string> p;
    for (const auto& x : s.pool_paths) p.push_back(x.string());
    j["pool_paths"] = p;
  }
  if (!s.variance_paths.empty()) {
    std::vector<std::string> p;
    for (const auto& x : s.variance_paths) p.push_back(x.string());
    j["variance_paths"] = p;
  }
  j["threads"] = s.threads;
  if (s.checkpoint_dir) j["checkpoint_dir"] = s.checkpoint_dir->string();
  return j;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

CampaignSpec load_campaign_config(const std::filesystem::path& path) {
  return campaign_from_json(read_json_file(path), path.parent_path());
}

}  // namespace fwe::cli
