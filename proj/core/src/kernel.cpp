#include "fwe/kernel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fwe/error.hpp"

namespace fwe {
namespace {

const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));

std::vector<double> parse_list(std::string_view s) {
  std::vector<double> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto tok = s.substr(0, comma);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw Error(Errc::invalid_argument, "bad number '" + std::string(tok) + "' in kernel spec");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

int kernel_radius(double sigma_vox) { return std::max(1, static_cast<int>(std::ceil(4.0 * sigma_vox))); }

// Dot product of two centered odd-length kernels.
double centered_dot(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = static_cast<long>(a.size() / 2);
  const auto rb = static_cast<long>(b.size() / 2);
  const long r = std::min(ra, rb);
  double s = 0.0;
  for (long d = -r; d <= r; ++d) s += a[static_cast<std::size_t>(ra + d)] * b[static_cast<std::size_t>(rb + d)];
  return s;
}

void convolve_axis(const double* in, double* out, const Dims& dims, int axis, const std::vector<double>& k) {
  const long r = static_cast<long>(k.size() / 2);
  const std::size_t nx = dims[0];
  const std::size_t ny = dims[1];
  const std::size_t nz = dims[2];
  if (axis == 0) {
    for (std::size_t line = 0; line < ny * nz; ++line) {
      const double* src = in + line * nx;
      double* dst = out + line * nx;
      const long n = static_cast<long>(nx);
      for (long x = 0; x < n; ++x) {
        const long lo = std::max(-r, -x);
        const long hi = std::min(r, n - 1 - x);
        double s = 0.0;
        for (long d = lo; d <= hi; ++d) s += k[static_cast<std::size_t>(d + r)] * src[x + d];
        dst[x] = s;
      }
    }
  } else if (axis == 1) {
    const long n = static_cast<long>(ny);
    for (std::size_t z = 0; z < nz; ++z) {
      const double* slab = in + z * nx * ny;
      double* oslab = out + z * nx * ny;
      for (long y = 0; y < n; ++y) {
        double* dst = oslab + static_cast<std::size_t>(y) * nx;
        std::fill(dst, dst + nx, 0.0);
        const long lo = std::max(-r, -y);
        const long hi = std::min(r, n - 1 - y);
        for (long d = lo; d <= hi; ++d) {
          const double w = k[static_cast<std::size_t>(d + r)];
          const double* src = slab + static_cast<std::size_t>(y + d) * nx;
          for (std::size_t x = 0; x < nx; ++x) dst[x] += w * src[x];
        }
      }
    }
  } else {
    const std::size_t plane = nx * ny;
    const long n = static_cast<long>(nz);
    for (long z = 0; z < n; ++z) {
      double* dst = out + static_cast<std::size_t>(z) * plane;
      std::fill(dst, dst + plane, 0.0);
      const long lo = std::max(-r, -z);
      const long hi = std::min(r, n - 1 - z);
      for (long d = lo; d <= hi; ++d) {
        const double w = k[static_cast<std::size_t>(d + r)];
        const double* src = in + static_cast<std::size_t>(z + d) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += w * src[i];
      }
    }
  }
}

struct ComponentKernels {
  double weight;
  std::array<std::vector<double>, 3> axes;
};

std::vector<ComponentKernels> build_components(const KernelSpec& kernel, const Grid& grid) {
  kernel.validate();
  std::vector<ComponentKernels> comps;
  for (std::size_t c = 0; c < kernel.fwhm_mm.size(); ++c) {
    ComponentKernels ck{kernel.weights[c], {}};
    for (int a = 0; a < 3; ++a) {
      if (kernel.fwhm_mm[c] < 0.1 * grid.voxel_mm[a]) {
        throw Error(Errc::invalid_argument, "kernel FWHM below a tenth of the voxel size");
      }
      ck.axes[a] = gaussian_kernel_1d(kernel.fwhm_mm[c], grid.voxel_mm[a]);
      if (ck.axes[a].size() / 2 >= grid.dims[a]) {
        throw Error(Errc::kernel_too_wide, "kernel support " + std::to_string(ck.axes[a].size()) +
                                               " exceeds grid extent " + std::to_string(grid.dims[a]));
      }
    }
    comps.push_back(std::move(ck));
  }
  return comps;
}

void separable(std::vector<double>& data, const Grid& grid, const std::array<std::vector<double>, 3>& axes,
               std::vector<double>& scratch) {
  scratch.resize(data.size());
  for (int a = 0; a < 3; ++a) {
    convolve_axis(data.data(), scratch.data(), grid.dims, a, axes[a]);
    data.swap(scratch);
  }
}

}  // namespace

double fwhm_to_sigma(double fwhm) noexcept { return fwhm / kFwhmPerSigma; }
double sigma_to_fwhm(double sigma) noexcept { return sigma * kFwhmPerSigma; }

KernelSpec KernelSpec::gaussian(double fwhm_mm) {
  KernelSpec k{Kind::gaussian, {fwhm_mm}, {1.0}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::mixture(std::vector<double> fwhm_mm, std::vector<double> weights) {
  KernelSpec k{Kind::gaussian_mixture, std::move(fwhm_mm), std::move(weights)};
  k.validate();
  return k;
}

KernelSpec KernelSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error(Errc::invalid_argument, "kernel spec needs 'kind:widths'");
  const auto kind = text.substr(0, colon);
  auto rest = text.substr(colon + 1);
  if (kind == "gaussian") {
    const auto widths = parse_list(rest);
    if (widths.size() != 1) throw Error(Errc::invalid_argument, "gaussian kernel takes one FWHM");
    return gaussian(widths[0]);
  }
  if (kind == "mix") {
    const auto colon2 = rest.find(':');
    if (colon2 == std::string_view::npos) throw Error(Errc::invalid_argument, "mix kernel needs 'mix:f1,f2:w1,w2'");
    return mixture(parse_list(rest.substr(0, colon2)), parse_list(rest.substr(colon2 + 1)));
  }
  throw Error(Errc::invalid_argument, "unknown kernel kind '" + std::string(kind) + "'");
}

std::string KernelSpec::to_string() const {
  if (kind == Kind::gaussian) return "gaussian:" + format_number(fwhm_mm.front());
  std::string s = "mix:";
  for (std::size_t i = 0; i < fwhm_mm.size(); ++i) s += (i ? "," : "") + format_number(fwhm_mm[i]);
  s += ":";
  for (std::size_t i = 0; i < weights.size(); ++i) s += (i ? "," : "") + format_number(weights[i]);
  return s;
}

KernelSpec KernelSpec::scaled(double factor) const {
  KernelSpec k = *this;
  for (auto& f : k.fwhm_mm) f *= factor;
  return k;
}

void KernelSpec::validate() const {
  if (fwhm_mm.empty() || fwhm_mm.size() != weights.size()) {
    throw Error(Errc::invalid_argument, "kernel needs one weight per component");
  }
  if (kind == Kind::gaussian && fwhm_mm.size() != 1) {
    throw Error(Errc::invalid_argument, "gaussian kernel has exactly one component");
  }
  if (kind == Kind::gaussian_mixture && fwhm_mm.size() < 2) {
    throw Error(Errc::invalid_argument, "mixture kernel needs at least two components");
  }
  for (double f : fwhm_mm) {
    if (!(f > 0.0) || !std::isfinite(f)) throw Error(Errc::invalid_argument, "kernel FWHM must be positive");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(Errc::invalid_argument, "mixture weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error(Errc::invalid_argument, "mixture weights must sum to 1");
}

std::vector<double> gaussian_kernel_1d(double fwhm_mm, double voxel_mm) {
  const double sigma = fwhm_to_sigma(fwhm_mm) / voxel_mm;
  const int r = kernel_radius(sigma);
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int d = -r; d <= r; ++d) {
    const double v = std::exp(-0.5 * (d * d) / (sigma * sigma));
    k[static_cast<std::size_t>(d + r)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

double kernel_cross_product(const KernelSpec& a, const KernelSpec& b, const Spacing& voxel_mm) {
  a.validate();
  b.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < a.fwhm_mm.size(); ++i) {
    for (std::size_t j = 0; j < b.fwhm_mm.size(); ++j) {
      double prod = a.weights[i] * b.weights[j];
      for (int ax = 0; ax < 3; ++ax) {
        prod *= centered_dot(gaussian_kernel_1d(a.fwhm_mm[i], voxel_mm[ax]),
                             gaussian_kernel_1d(b.fwhm_mm[j], voxel_mm[ax]));
      }
      s += prod;
    }
  }
  return s;
}

double kernel_sum_of_squares(const KernelSpec& kernel, const Spacing& voxel_mm) {
  return kernel_cross_product(kernel, kernel, voxel_mm);
}

double smooth_in_place(std::vector<double>& data, const Grid& grid, const KernelSpec& kernel,
                       Rescale rescale, std::vector<double>& scratch) {
  if (data.size() != grid.size()) throw Error(Errc::invalid_argument, "buffer does not match grid");
  const auto comps = build_components(kernel, grid);

  if (comps.size() == 1) {
    separable(data, grid, comps.front().axes, scratch);
  } else {
    const std::vector<double> original = data;
    std::vector<double> acc(data.size(), 0.0);
    std::vector<double> work;
    for (const auto& c : comps) {
      work = original;
      separable(work, grid, c.axes, scratch);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c.weight * work[i];
    }
    data.swap(acc);
  }

  double divisor = 1.0;
  if (rescale == Rescale::analytic) {
    divisor = std::sqrt(kernel_sum_of_squares(kernel, grid.voxel_mm));
  } else if (rescale == Rescale::empirical) {
    const auto n = static_cast<double>(data.size());
    const double mean = std::accumulate(data.begin(), data.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : data) ss += (v - mean) * (v - mean);
    divisor = std::sqrt(ss / (n - 1.0));
    if (!(divisor > 0.0)) throw Error(Errc::invalid_argument, "cannot standardize a constant field");
  }
  if (divisor != 1.0) {
    const double inv = 1.0 / divisor;
    for (auto& v : data) v *= inv;
  }
  return divisor;
}

Volume3 smooth(const Volume3& v, const KernelSpec& kernel, Rescale rescale, const Mask* support) {
  std::vector<double> data;
  if (support != nullptr) {
    require_same_dims(v.grid(), support->grid());
    data.assign(v.size(), 0.0);
    for (auto i : support->indices()) data[i] = v[i];
  } else {
    data.assign(v.data().begin(), v.data().end());
  }
  std::vector<double> scratch;
  smooth_in_place(data, v.grid(), kernel, rescale, scratch);
  if (support != nullptr) {
    std::vector<double> masked(data.size(), 0.0);
    for (auto i : support->indices()) masked[i] = data[i];
    data.swap(masked);
  }
  return Volume3(v.grid(), std::move(data), v.orientation());
}

}  // namespace fwe
