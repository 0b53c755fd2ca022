#include "fwe/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "fwe/distributions.hpp"
#include "fwe/error.hpp"
#include "fwe/random.hpp"

namespace fwe {

Volume3 gaussian_volume(const Grid& grid, std::uint64_t seed) {
  grid.validate();
  std::vector<double> data(grid.size());
  Rng rng(seed);
  rng.fill_gaussian(data);
  return Volume3(grid, std::move(data));
}

NonstationarityField NonstationarityField::blob(const Grid& grid, const std::array<double, 3>& center_vox,
                                                double radius_mm, double peak_gain) {
  if (!(radius_mm > 0.0) || !(peak_gain > 0.0)) {
    throw Error(Errc::invalid_argument, "blob radius and gain must be positive");
  }
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = grid.coords(i);
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = (static_cast<double>(c[a]) - center_vox[a]) * grid.voxel_mm[a];
      d2 += d * d;
    }
    g[i] = 1.0 + (peak_gain - 1.0) * std::exp(-d2 / (2.0 * radius_mm * radius_mm));
  }
  return {Volume3(grid, std::move(g))};
}

void NonstationarityField::validate(const Mask& mask) const {
  require_same_dims(gain.grid(), mask.grid());
  for (auto i : mask.indices()) {
    if (!(gain[i] > 0.0) || !std::isfinite(gain[i])) {
      throw Error(Errc::invalid_argument, "nonstationarity gain must be finite and positive inside the mask");
    }
  }
}

Volume3 synth_null_subject(const Grid& grid, const KernelSpec& kernel, const Mask& mask,
                           const NonstationarityField* nonstat, std::uint64_t seed) {
  require_same_dims(grid, mask.grid());
  std::vector<double> noise = gaussian_volume(grid, seed).release();
  std::vector<double> scratch;
  std::vector<double> out(grid.size(), 0.0);

  if (nonstat == nullptr) {
    smooth_in_place(noise, grid, kernel, Rescale::analytic, scratch);
    for (auto i : mask.indices()) out[i] = noise[i];
    return Volume3(grid, std::move(out));
  }

  nonstat->validate(mask);
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -std::numeric_limits<double>::infinity();
  for (auto i : mask.indices()) {
    gmin = std::min(gmin, nonstat->gain[i]);
    gmax = std::max(gmax, nonstat->gain[i]);
  }
  const KernelSpec narrow = kernel.scaled(gmin);
  if (gmax == gmin) {
    smooth_in_place(noise, grid, narrow, Rescale::analytic, scratch);
    for (auto i : mask.indices()) out[i] = noise[i];
    return Volume3(grid, std::move(out));
  }

  const KernelSpec wide = kernel.scaled(gmax);
  std::vector<double> a = noise;
  std::vector<double> b = std::move(noise);
  smooth_in_place(a, grid, narrow, Rescale::analytic, scratch);
  smooth_in_place(b, grid, wide, Rescale::analytic, scratch);
  const double corr = kernel_cross_product(narrow, wide, grid.voxel_mm) /
                      std::sqrt(kernel_sum_of_squares(narrow, grid.voxel_mm) *
                                kernel_sum_of_squares(wide, grid.voxel_mm));
  for (auto i : mask.indices()) {
    const double w = (nonstat->gain[i] - gmin) / (gmax - gmin);
    const double norm = std::sqrt((1 - w) * (1 - w) + w * w + 2 * w * (1 - w) * corr);
    out[i] = ((1 - w) * a[i] + w * b[i]) / norm;
  }
  return Volume3(grid, std::move(out));
}

// ---------------------------------------------------------------------------

ParadigmSpec ParadigmSpec::standard(Kind kind, double tr_s, std::size_t n_frames) {
  ParadigmSpec p;
  p.kind = kind;
  p.tr_s = tr_s;
  p.n_frames = n_frames;
  switch (kind) {
    case Kind::B1: p.activity_s = p.activity_max_s = 10.0; p.rest_s = p.rest_max_s = 10.0; break;
    case Kind::B2: p.activity_s = p.activity_max_s = 30.0; p.rest_s = p.rest_max_s = 30.0; break;
    case Kind::E1: p.activity_s = p.activity_max_s = 2.0; p.rest_s = p.rest_max_s = 6.0; break;
    case Kind::E2:
      p.activity_s = 1.0; p.activity_max_s = 4.0;
      p.rest_s = 3.0; p.rest_max_s = 6.0;
      break;
  }
  return p;
}

ParadigmSpec::Kind ParadigmSpec::parse_kind(const std::string& name) {
  if (name == "B1") return Kind::B1;
  if (name == "B2") return Kind::B2;
  if (name == "E1") return Kind::E1;
  if (name == "E2") return Kind::E2;
  throw Error(Errc::invalid_argument, "unknown paradigm '" + name + "'");
}

std::string to_string(ParadigmSpec::Kind kind) {
  switch (kind) {
    case ParadigmSpec::Kind::B1: return "B1";
    case ParadigmSpec::Kind::B2: return "B2";
    case ParadigmSpec::Kind::E1: return "E1";
    case ParadigmSpec::Kind::E2: return "E2";
  }
  return "?";
}

void ParadigmSpec::validate() const {
  if (!(activity_s > 0.0) || !(rest_s > 0.0)) {
    throw Error(Errc::duration_zero, "activity and rest durations must be positive");
  }
  if (kind == Kind::E2 && (activity_max_s < activity_s || rest_max_s < rest_s)) {
    throw Error(Errc::invalid_argument, "randomized duration bounds out of order");
  }
  if (!(tr_s > 0.0)) throw Error(Errc::invalid_argument, "TR must be positive");
  if (n_frames < 8) throw Error(Errc::invalid_argument, "paradigm needs at least 8 frames");
}

double canonical_hrf(double t_s) {
  if (t_s <= 0.0) return 0.0;
  auto gamma_pdf = [t_s](double shape) {
    return std::exp((shape - 1.0) * std::log(t_s) - t_s - dist::log_gamma(shape));
  };
  return gamma_pdf(6.0) - gamma_pdf(16.0) / 6.0;
}

std::vector<double> paradigm_regressor(const ParadigmSpec& p, std::uint64_t seed) {
  p.validate();
  constexpr std::size_t kOversample = 16;
  constexpr double kHrfLength = 32.0;
  const double dt = p.tr_s / static_cast<double>(kOversample);
  const std::size_t n_hr = p.n_frames * kOversample;

  std::vector<double> box(n_hr, 0.0);
  if (p.kind == ParadigmSpec::Kind::E2) {
    Rng rng(seed);
    double t = 0.0;
    std::size_t i = 0;
    while (i < n_hr) {
      const double on = rng.uniform(p.activity_s, p.activity_max_s);
      const double off = rng.uniform(p.rest_s, p.rest_max_s);
      const double on_end = t + on;
      const double cycle_end = on_end + off;
      for (; i < n_hr && static_cast<double>(i) * dt < cycle_end; ++i) {
        box[i] = static_cast<double>(i) * dt < on_end ? 1.0 : 0.0;
      }
      t = cycle_end;
    }
  } else {
    const double period = p.activity_s + p.rest_s;
    for (std::size_t i = 0; i < n_hr; ++i) {
      box[i] = std::fmod(static_cast<double>(i) * dt, period) < p.activity_s ? 1.0 : 0.0;
    }
  }

  const auto n_h = static_cast<std::size_t>(kHrfLength / dt) + 1;
  std::vector<double> h(n_h);
  for (std::size_t j = 0; j < n_h; ++j) h[j] = canonical_hrf(static_cast<double>(j) * dt) * dt;

  std::vector<double> reg(p.n_frames);
  for (std::size_t k = 0; k < p.n_frames; ++k) {
    const std::size_t i = k * kOversample;
    double s = 0.0;
    for (std::size_t j = 0; j < n_h && j <= i; ++j) s += h[j] * box[i - j];
    reg[k] = s;
  }
  double mean = 0.0;
  for (double v : reg) mean += v;
  mean /= static_cast<double>(reg.size());
  for (auto& v : reg) v -= mean;
  return reg;
}

void Ar1Spec::validate() const {
  if (!(std::abs(rho) < 1.0)) throw Error(Errc::invalid_argument, "AR(1) coefficient must satisfy |rho| < 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(Errc::invalid_argument, "AR(1) sigma must be >= 0");
}

double legendre(std::size_t order, double x) {
  if (order == 0) return 1.0;
  double p0 = 1.0;
  double p1 = x;
  for (std::size_t n = 1; n < order; ++n) {
    const auto nd = static_cast<double>(n);
    const double p2 = ((2 * nd + 1) * x * p1 - nd * p0) / (nd + 1);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

FirstLevelResult first_level(const FirstLevelSpec& spec, const Grid& grid, const KernelSpec& kernel,
                             const Mask& mask, std::uint64_t seed) {
  spec.noise.validate();
  spec.paradigm.validate();
  require_same_dims(grid, mask.grid());
  const std::size_t n = spec.paradigm.n_frames;
  const std::size_t p = spec.drift_order + 2;
  if (n <= spec.drift_order + 2) throw Error(Errc::invalid_argument, "need more frames than drift_order + 2");

  const auto reg = paradigm_regressor(spec.paradigm, derive_seed(seed, {0x5041524144ULL}));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t t = 0; t < n; ++t) {
    const double tau = 2.0 * static_cast<double>(t) / static_cast<double>(n - 1) - 1.0;
    X(static_cast<Eigen::Index>(t), 0) = reg[t];
    for (std::size_t k = 0; k <= spec.drift_order; ++k) {
      X(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k + 1)) = legendre(k, tau);
    }
  }
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  lu.setThreshold(1e-10);
  if (lu.rank() < static_cast<Eigen::Index>(p)) {
    throw Error(Errc::rank_deficient_design, "design matrix is rank deficient");
  }
  const Eigen::MatrixXd xtx_inv = lu.inverse();

  const auto idx = mask.indices();
  const std::size_t m = idx.size();
  std::vector<double> xty(p * m, 0.0);
  std::vector<double> yy(m, 0.0);

  Rng rng(seed);
  const double rho = spec.noise.rho;
  const double sigma = spec.noise.sigma;
  std::vector<double> state(grid.size());
  rng.fill_gaussian(state);
  const double stationary_sd = sigma / std::sqrt(1.0 - rho * rho);
  for (auto& v : state) v *= stationary_sd;

  std::vector<double> innovations(grid.size());
  std::vector<double> frame;
  std::vector<double> scratch;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      rng.fill_gaussian(innovations);
      for (std::size_t i = 0; i < state.size(); ++i) state[i] = rho * state[i] + sigma * innovations[i];
    }
    frame = state;
    smooth_in_place(frame, grid, kernel, Rescale::analytic, scratch);
    const double signal = spec.activation * reg[t];
    for (std::size_t v = 0; v < m; ++v) {
      const double y = frame[idx[v]] + signal;
      yy[v] += y * y;
      for (std::size_t j = 0; j < p; ++j) {
        xty[j * m + v] += X(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) * y;
      }
    }
  }

  std::vector<double> beta(grid.size(), 0.0);
  std::vector<double> var(grid.size(), 0.0);
  const double dof = static_cast<double>(n - p);
  Eigen::VectorXd b(static_cast<Eigen::Index>(p));
  Eigen::VectorXd q(static_cast<Eigen::Index>(p));
  for (std::size_t v = 0; v < m; ++v) {
    for (std::size_t j = 0; j < p; ++j) q(static_cast<Eigen::Index>(j)) = xty[j * m + v];
    b = xtx_inv * q;
    const double rss = std::max(0.0, yy[v] - b.dot(q));
    beta[idx[v]] = b(0);
    var[idx[v]] = rss / dof * xtx_inv(0, 0);
  }
  return {Volume3(grid, std::move(beta)), Volume3(grid, std::move(var))};
}

Volume3 first_level_beta(const FirstLevelSpec& spec, const Grid& grid, const KernelSpec& kernel,
                         const Mask& mask, std::uint64_t seed) {
  return first_level(spec, grid, kernel, mask, seed).beta;
}

}  // namespace fwe
