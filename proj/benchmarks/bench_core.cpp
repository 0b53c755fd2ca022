#include <benchmark/benchmark.h>

#include <vector>

#include "fwe/cluster.hpp"
#include "fwe/geometry.hpp"
#include "fwe/kernel.hpp"
#include "fwe/perm.hpp"
#include "fwe/random.hpp"
#include "fwe/synth.hpp"

using namespace fwe;

namespace {

std::vector<double> noise(const Grid& g, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(g.size());
  rng.fill_gaussian(d);
  return d;
}

void BM_Smooth(benchmark::State& state) {
  const Grid g = cube_grid(static_cast<std::size_t>(state.range(0)), 2.0);
  const auto src = noise(g, 1);
  std::vector<double> buf, scratch;
  for (auto _ : state) {
    buf = src;
    benchmark::DoNotOptimize(smooth_in_place(buf, g, KernelSpec::gaussian(6.0), Rescale::analytic, scratch));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * g.size()));
}
BENCHMARK(BM_Smooth)->Arg(32)->Arg(48)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MaxExtent(benchmark::State& state) {
  const Grid g = cube_grid(48, 2.0);
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {46.0, 44.0, 40.0});
  const auto field = smooth(Volume3(g, noise(g, 2)), KernelSpec::gaussian(6.0), Rescale::analytic);
  ClusterWorkspace ws(m, static_cast<Connectivity>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ws.max_extent(field.data(), 2.3263));
}
BENCHMARK(BM_MaxExtent)
    ->Arg(static_cast<int>(Connectivity::faces6))
    ->Arg(static_cast<int>(Connectivity::corners26))
    ->Unit(benchmark::kMicrosecond);

void BM_PermResample(benchmark::State& state) {
  const Grid g = cube_grid(32, 2.0);
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {30.0, 30.0, 28.0});
  std::vector<Volume3> a, b;
  for (std::uint64_t k = 0; k < 8; ++k) {
    a.emplace_back(g, noise(g, 10 + k));
    b.emplace_back(g, noise(g, 20 + k));
  }
  const SubjectStack s1{Volume4::stack(a), std::nullopt};
  const SubjectStack s2{Volume4::stack(b), std::nullopt};
  PermOptions po;
  po.n_resamples = static_cast<std::size_t>(state.range(0));
  po.cdts = {CdtSpec::from_p(0.01)};
  po.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(perm_build_null(s1, s2, m, po));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_PermResample)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_FwhmResiduals(benchmark::State& state) {
  const Grid g = cube_grid(48, 2.0);
  const Mask m = make_ellipsoid_mask(g.dims, g.voxel_mm, {46.0, 44.0, 40.0});
  std::vector<Volume3> frames;
  for (std::uint64_t k = 0; k < 16; ++k) {
    frames.push_back(smooth(Volume3(g, noise(g, 30 + k)), KernelSpec::gaussian(6.0), Rescale::analytic));
  }
  const auto res = Volume4::stack(frames);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_fwhm_residuals(res, m, g.voxel_mm));
}
BENCHMARK(BM_FwhmResiduals)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
