#include "fwe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fwe/error.hpp"

namespace fwe {

namespace {

const double kFourLn2 = 4.0 * std::log(2.0);
const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));

/// Pearson correlation of v[i] and v[i + L*stride] over pairs inside the mask.
/// Returns NaN when undefined.
double shifted_correlation(std::span<const double> v, const Mask& mask, int axis, std::size_t lag) {
  const Grid& g = mask.grid();
  const std::size_t step = lag * g.stride(axis);
  const auto flags = mask.flags();
  std::size_t n = 0;
  double sa = 0.0;
  double sb = 0.0;
  auto visit = [&](auto&& fn) {
    for (auto i : mask.indices()) {
      if (g.coords(i)[axis] + lag >= g.dims[axis]) continue;
      const std::size_t j = i + step;
      if (flags[j] == 0) continue;
      fn(v[i], v[j]);
    }
  };
  visit([&](double a, double b) { ++n; sa += a; sb += b; });
  if (n < 2) return std::nan("");
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  visit([&](double a, double b) {
    const double da = a - ma;
    const double db = b - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  });
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

const char* to_string(SmoothnessSource s) noexcept {
  return s == SmoothnessSource::group_residuals ? "group_residuals" : "first_level_average";
}

double SmoothnessEstimate::geometric_mean_fwhm() const {
  return std::cbrt(fwhm_mm[0] * fwhm_mm[1] * fwhm_mm[2]);
}

SmoothnessEstimate SmoothnessEstimate::from_fwhm(const std::array<double, 3>& fwhm_mm, double volume_mm3,
                                                 SmoothnessSource source) {
  for (double f : fwhm_mm) {
    if (!(f > 0.0) || !std::isfinite(f)) throw Error(Errc::invalid_argument, "FWHM must be positive");
  }
  if (!(volume_mm3 > 0.0)) throw Error(Errc::invalid_argument, "search volume must be positive");
  return {fwhm_mm, volume_mm3 / (fwhm_mm[0] * fwhm_mm[1] * fwhm_mm[2]), source};
}

SacfCurve estimate_sacf(std::span<const Volume3> maps, const Mask& mask, double max_lag_mm) {
  if (maps.empty()) throw Error(Errc::invalid_argument, "SACF needs at least one map");
  const Grid& g = mask.grid();
  const double step = *std::min_element(g.voxel_mm.begin(), g.voxel_mm.end());
  if (!(max_lag_mm >= step)) throw Error(Errc::invalid_argument, "maximum lag is below the voxel size");
  for (const auto& m : maps) require_same_dims(m.grid(), g);

  const auto n_lags = static_cast<std::size_t>(std::floor(max_lag_mm / step + 1e-9));
  SacfCurve curve;
  curve.n_maps = maps.size();
  for (std::size_t k = 1; k <= n_lags; ++k) {
    const double d = static_cast<double>(k) * step;
    double map_sum = 0.0;
    std::size_t map_count = 0;
    for (const auto& m : maps) {
      double axis_sum = 0.0;
      std::size_t axis_count = 0;
      for (int a = 0; a < 3; ++a) {
        const auto lag = static_cast<std::size_t>(std::llround(d / g.voxel_mm[a]));
        if (lag == 0 || lag >= g.dims[a]) continue;
        const double r = shifted_correlation(m.data(), mask, a, lag);
        if (std::isnan(r)) continue;
        axis_sum += r;
        ++axis_count;
      }
      if (axis_count == 0) continue;
      map_sum += axis_sum / static_cast<double>(axis_count);
      ++map_count;
    }
    if (map_count == 0) {
      throw Error(Errc::empty_overlap, "no voxel pairs inside the mask at lag " + std::to_string(d) + " mm");
    }
    curve.distances_mm.push_back(d);
    curve.correlation.push_back(map_sum / static_cast<double>(map_count));
  }
  return curve;
}

double fit_sacf_sigma(const SacfCurve& curve) {
  if (curve.distances_mm.empty()) throw Error(Errc::invalid_argument, "empty SACF curve");
  auto loss = [&](double s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < curve.distances_mm.size(); ++i) {
      const double d = curve.distances_mm[i];
      const double r = curve.correlation[i] - std::exp(-d * d / (2.0 * s * s));
      acc += r * r;
    }
    return acc;
  };
  // Golden-section search on log sigma.
  double lo = std::log(1e-3);
  double hi = std::log(1e3 * curve.distances_mm.back());
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = loss(std::exp(x1));
  double f2 = loss(std::exp(x2));
  for (int it = 0; it < 200; ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = loss(std::exp(x1));
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = loss(std::exp(x2));
    }
  }
  return std::exp(0.5 * (lo + hi));
}

double sacf_sigma_to_fwhm(double sigma_mm) {
  if (!(sigma_mm >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be nonnegative");
  return sigma_mm / std::sqrt(2.0) * kFwhmPerSigma;
}

double fwhm_to_sacf_sigma(double fwhm_mm) {
  if (!(fwhm_mm >= 0.0)) throw Error(Errc::invalid_argument, "FWHM must be nonnegative");
  return fwhm_mm / kFwhmPerSigma * std::sqrt(2.0);
}

void write_sacf_csv(const SacfCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << "distance_mm,correlation\n0,1\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.distances_mm.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g,%.10g\n", curve.distances_mm[i], curve.correlation[i]);
    out << buf;
  }
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

SmoothnessEstimate estimate_fwhm_residuals(const Volume4& residuals, const Mask& mask,
                                           const Spacing& voxel_size_mm) {
  const Grid& g = residuals.grid();
  require_same_dims(g, mask.grid());
  const std::size_t nt = residuals.frames();
  if (nt < 3) throw Error(Errc::invalid_argument, "smoothness estimation needs at least 3 residual frames");
  for (double h : voxel_size_mm) {
    if (!(h > 0.0)) throw Error(Errc::invalid_argument, "voxel size must be positive");
  }

  const auto idx = mask.indices();
  std::vector<std::int64_t> compact(g.size(), -1);
  std::vector<double> e(idx.size() * nt);
  for (std::size_t m = 0; m < idx.size(); ++m) {
    double ss = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const double v = residuals.frame(t)[idx[m]];
      e[m * nt + t] = v;
      ss += v * v;
    }
    if (!(ss > 0.0) || !std::isfinite(ss)) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t t = 0; t < nt; ++t) e[m * nt + t] *= inv;
    compact[idx[m]] = static_cast<std::int64_t>(m);
  }

  std::array<double, 3> fwhm{};
  for (int a = 0; a < 3; ++a) {
    const std::size_t stride = g.stride(a);
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const std::size_t i = idx[m];
      if (compact[i] < 0 || g.coords(i)[a] + 1 >= g.dims[a]) continue;
      const std::int64_t n = compact[i + stride];
      if (n < 0) continue;
      const double* p = &e[m * nt];
      const double* q = &e[static_cast<std::size_t>(n) * nt];
      double s = 0.0;
      for (std::size_t t = 0; t < nt; ++t) s += (q[t] - p[t]) * (q[t] - p[t]);
      acc += s;
      ++pairs;
    }
    if (pairs == 0 || !(acc > 0.0)) {
      throw Error(Errc::degenerate_residuals, "no difference variance along axis " + std::to_string(a));
    }
    const double v = acc / static_cast<double>(pairs);
    fwhm[a] = voxel_size_mm[a] * std::sqrt(kFourLn2 / v);
  }
  const double volume = static_cast<double>(mask.n_inside()) * voxel_size_mm[0] * voxel_size_mm[1] *
                        voxel_size_mm[2];
  return SmoothnessEstimate::from_fwhm(fwhm, volume, SmoothnessSource::group_residuals);
}

RoughnessMap roughness_map(std::span<const Volume3> maps, const Mask& mask) {
  if (maps.empty()) throw Error(Errc::invalid_argument, "roughness needs at least one map");
  const Grid& g = mask.grid();
  const auto flags = mask.flags();
  std::vector<double> rough(g.size(), 0.0);
  for (const auto& map : maps) {
    require_same_dims(map.grid(), g);
    const auto v = map.data();
    for (auto i : mask.indices()) {
      const auto c = g.coords(i);
      double mag2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const std::size_t s = g.stride(a);
        const double h = g.voxel_mm[a];
        const bool up = c[a] + 1 < g.dims[a] && flags[i + s] != 0;
        const bool down = c[a] > 0 && flags[i - s] != 0;
        double d = 0.0;
        if (up && down) {
          d = (v[i + s] - v[i - s]) / (2.0 * h);
        } else if (up) {
          d = (v[i + s] - v[i]) / h;
        } else if (down) {
          d = (v[i] - v[i - s]) / h;
        }
        mag2 += d * d;
      }
      rough[i] += std::sqrt(mag2);
    }
  }
  std::vector<double> inv(g.size(), 0.0);
  const double nm = static_cast<double>(maps.size());
  for (auto i : mask.indices()) {
    rough[i] /= nm;
    inv[i] = 1.0 / (rough[i] + 1e-12);
  }
  return {Volume3(g, std::move(rough)), Volume3(g, std::move(inv))};
}

Volume3 cluster_incidence_map(std::span<const Mask> cluster_masks) {
  if (cluster_masks.empty()) throw Error(Errc::invalid_argument, "incidence needs at least one mask");
  const Grid& g = cluster_masks.front().grid();
  std::vector<double> out(g.size(), 0.0);
  for (const auto& m : cluster_masks) {
    require_same_dims(g, m.grid());
    for (auto i : m.indices()) out[i] += 1.0;
  }
  return Volume3(g, std::move(out));
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::invalid_argument, "spearman needs paired samples");
  auto ranks = [](std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(ra.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace fwe
