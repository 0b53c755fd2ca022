#include "fwe/mc.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"
#include "fwe/error.hpp"
#include "fwe/parallel.hpp"
#include "fwe/random.hpp"

namespace fwe {

namespace {
constexpr std::string_view kMcMagic = "FWEMCN01";
constexpr std::uint32_t kMcVersion = 1;
}  // namespace

const char* to_string(McMode m) noexcept {
  return m == McMode::buggy_empirical_rescale ? "buggy" : "fixed";
}

std::vector<std::uint64_t> McNull::histogram() const {
  const std::uint32_t top = extents.empty() ? 0 : *std::max_element(extents.begin(), extents.end());
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(top) + 1, 0);
  for (auto e : extents) ++counts[e];
  return counts;
}

std::size_t McNull::count_at_least(std::size_t extent) const noexcept {
  std::size_t c = 0;
  for (auto e : extents) c += e >= extent;
  return c;
}

McNull mc_build_null(const Mask& mask, const KernelSpec& kernel, double cdt_z, const McOptions& opt) {
  if (opt.n_iterations < 1) throw Error(Errc::invalid_argument, "Monte Carlo needs at least one iteration");
  if (!std::isfinite(cdt_z)) throw Error(Errc::invalid_argument, "CDT z must be finite");
  mask.require_nonempty();
  kernel.validate();
  const Grid& grid = mask.grid();
  const Rescale rescale =
      opt.mode == McMode::buggy_empirical_rescale ? Rescale::empirical : Rescale::analytic;

  // Fail early on kernel errors rather than inside a worker.
  {
    std::vector<double> probe(grid.size(), 0.0);
    probe[0] = 1.0;
    std::vector<double> scratch;
    smooth_in_place(probe, grid, kernel, Rescale::none, scratch);
  }

  McNull null;
  null.mode = opt.mode;
  null.kernel = kernel;
  null.cdt_z = cdt_z;
  null.connectivity = opt.connectivity;
  null.extents.assign(opt.n_iterations, 0);

  struct Worker {
    ClusterWorkspace ws;
    std::vector<double> field;
    std::vector<double> scratch;
  };
  const unsigned nw = effective_workers(opt.n_iterations, opt.threads);
  std::vector<Worker> workers;
  workers.reserve(nw);
  for (unsigned w = 0; w < nw; ++w) workers.push_back({ClusterWorkspace(mask, opt.connectivity), {}, {}});

  parallel_for(opt.n_iterations, opt.threads, [&](std::size_t i, unsigned w) {
    auto& wk = workers[w];
    wk.field.resize(grid.size());
    Rng rng(derive_seed(opt.seed, {i}));
    rng.fill_gaussian(wk.field);
    smooth_in_place(wk.field, grid, kernel, rescale, wk.scratch);
    null.extents[i] = static_cast<std::uint32_t>(wk.ws.max_extent(wk.field, cdt_z, 1));
  });
  return null;
}

std::size_t mc_extent_threshold(const McNull& null, double target_fwe_p) {
  if (!(target_fwe_p > 0.0 && target_fwe_p <= 1.0)) {
    throw Error(Errc::invalid_argument, "target FWE p must lie in (0, 1]");
  }
  const auto n = static_cast<double>(null.n_iterations());
  if (n * target_fwe_p < 1.0 - 1e-9) {
    throw Error(Errc::insufficient_iterations, std::to_string(null.n_iterations()) +
                                                   " iterations cannot resolve FWE p " +
                                                   std::to_string(target_fwe_p));
  }
  const auto hist = null.histogram();
  // tail[s] = count(extent >= s)
  std::vector<std::uint64_t> tail(hist.size() + 1, 0);
  for (std::size_t s = hist.size(); s-- > 0;) tail[s] = tail[s + 1] + hist[s];
  for (std::size_t s = 1; s < tail.size(); ++s) {
    if (static_cast<double>(tail[s]) / n <= target_fwe_p) return s;
  }
  return tail.size();
}

double mc_cluster_fwe_p(std::size_t extent_voxels, const McNull& null) {
  return (1.0 + static_cast<double>(null.count_at_least(extent_voxels))) /
         (static_cast<double>(null.n_iterations()) + 1.0);
}

KernelSpec kernel_from_smoothness(const SmoothnessEstimate& s) {
  return KernelSpec::gaussian(s.geometric_mean_fwhm());
}

void write_mc_null(const McNull& null, const std::filesystem::path& path) {
  detail::LeWriter w;
  w.bytes(kMcMagic);
  w.put(kMcVersion);
  w.put(static_cast<std::uint8_t>(null.mode));
  w.put(static_cast<std::uint8_t>(null.connectivity));
  w.put(static_cast<std::uint16_t>(null.kernel.fwhm_mm.size()));
  w.put(null.cdt_z);
  for (std::size_t c = 0; c < null.kernel.fwhm_mm.size(); ++c) {
    w.put(null.kernel.fwhm_mm[c]);
    w.put(null.kernel.weights[c]);
  }
  w.put(static_cast<std::uint64_t>(null.extents.size()));
  for (auto e : null.extents) w.put(e);
  w.save(path);
}

McNull read_mc_null(const std::filesystem::path& path) {
  detail::LeReader r(path);
  r.expect(kMcMagic);
  if (r.get<std::uint32_t>() != kMcVersion) throw Error(Errc::malformed_header, "unsupported sidecar version");
  McNull null;
  const auto mode = r.get<std::uint8_t>();
  const auto conn = r.get<std::uint8_t>();
  if (mode > 1 || conn > 2) throw Error(Errc::malformed_header, "bad mode or connectivity in sidecar");
  null.mode = static_cast<McMode>(mode);
  null.connectivity = static_cast<Connectivity>(conn);
  const auto ncomp = r.get<std::uint16_t>();
  null.cdt_z = r.get<double>();
  std::vector<double> fwhm;
  std::vector<double> weights;
  for (std::uint16_t c = 0; c < ncomp; ++c) {
    fwhm.push_back(r.get<double>());
    weights.push_back(r.get<double>());
  }
  null.kernel.kind = ncomp > 1 ? KernelSpec::Kind::gaussian_mixture : KernelSpec::Kind::gaussian;
  null.kernel.fwhm_mm = std::move(fwhm);
  null.kernel.weights = std::move(weights);
  const auto n = r.get<std::uint64_t>();
  null.extents.resize(n);
  for (auto& e : null.extents) e = r.get<std::uint32_t>();
  r.require_end();
  return null;
}

}  // namespace fwe
