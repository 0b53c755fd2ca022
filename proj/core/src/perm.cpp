#include "fwe/perm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binio.hpp"
#include "fwe/error.hpp"
#include "fwe/parallel.hpp"
#include "fwe/random.hpp"

namespace fwe {

namespace {

constexpr std::string_view kPermMagic = "FWEPRM01";
constexpr std::uint32_t kPermVersion = 1;
constexpr double kDegenerateRel = 1e-12;

/// Mask voxels in voxel-major order: row m holds the n subject values of
/// voxel indices[m]. Two-sample rows are centered.
struct PermData {
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::vector<double> rows;
  std::vector<double> q;          // sum of squares of the (centered) row
  std::vector<std::uint8_t> dead;  // constant voxels
};

PermData gather(const std::vector<std::span<const double>>& frames, std::size_t n1, const Mask& mask,
                bool center) {
  PermData d;
  d.n = frames.size();
  d.n1 = n1;
  const auto idx = mask.indices();
  d.rows.resize(idx.size() * d.n);
  d.q.resize(idx.size());
  d.dead.resize(idx.size());
  for (std::size_t m = 0; m < idx.size(); ++m) {
    double* row = &d.rows[m * d.n];
    double sum = 0.0;
    double raw = 0.0;
    for (std::size_t k = 0; k < d.n; ++k) {
      row[k] = frames[k][idx[m]];
      sum += row[k];
      raw += row[k] * row[k];
    }
    if (center) {
      const double mean = sum / static_cast<double>(d.n);
      double q = 0.0;
      for (std::size_t k = 0; k < d.n; ++k) {
        row[k] -= mean;
        q += row[k] * row[k];
      }
      d.q[m] = q;
      d.dead[m] = q <= kDegenerateRel * raw;
    } else {
      d.q[m] = raw;
      d.dead[m] = raw == 0.0;
    }
  }
  return d;
}

/// Enumerates the k-subsets of [0, n) in lexicographic order.
bool next_combination(std::vector<std::uint32_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  for (std::size_t i = k; i-- > 0;) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

struct Design {
  PermScheme scheme;
  std::size_t n;
  std::size_t n1;
  std::size_t n_resamples;
  bool exhaustive;
  std::uint64_t seed;
  std::vector<std::vector<double>> enumerated;  // exhaustive weight vectors

  /// Weight vector of resample r: group-1 indicator or +-1 signs.
  void weights(std::size_t r, std::vector<double>& w) const {
    w.assign(n, 0.0);
    if (exhaustive) {
      w = enumerated[r];
      return;
    }
    if (scheme == PermScheme::relabel_two_sample) {
      if (r == 0) {
        for (std::size_t k = 0; k < n1; ++k) w[k] = 1.0;
        return;
      }
      Rng rng(derive_seed(seed, {r}));
      const auto perm = rng.permutation(n);
      for (std::size_t k = 0; k < n1; ++k) w[perm[k]] = 1.0;
    } else {
      if (r == 0) {
        std::fill(w.begin(), w.end(), 1.0);
        return;
      }
      Rng rng(derive_seed(seed, {r}));
      for (std::size_t k = 0; k < n; ++k) w[k] = rng.coin() ? -1.0 : 1.0;
    }
  }
};

Design make_design(PermScheme scheme, std::size_t n, std::size_t n1, const PermOptions& opt) {
  Design d{scheme, n, n1, opt.n_resamples, false, opt.seed, {}};
  if (scheme == PermScheme::sign_flip_one_sample) {
    if (n < 63 && (std::size_t{1} << n) <= opt.n_resamples) {
      d.exhaustive = true;
      for (std::size_t b = 0; b < (std::size_t{1} << n); ++b) {
        std::vector<double> w(n);
        for (std::size_t k = 0; k < n; ++k) w[k] = ((b >> k) & 1U) != 0 ? -1.0 : 1.0;
        d.enumerated.push_back(std::move(w));
      }
    }
  } else {
    const double log_count = log_n_choose_k(n, n1);
    if (log_count < std::log(static_cast<double>(opt.n_resamples)) + 1e-9) {
      d.exhaustive = true;
      std::vector<std::uint32_t> c(n1);
      for (std::size_t k = 0; k < n1; ++k) c[k] = static_cast<std::uint32_t>(k);
      do {
        std::vector<double> w(n, 0.0);
        for (auto k : c) w[k] = 1.0;
        d.enumerated.push_back(std::move(w));
      } while (next_combination(c, n));
    }
  }
  if (d.exhaustive) d.n_resamples = d.enumerated.size();
  return d;
}

PermNull run(const PermData& data, const Design& design, const Mask& mask, const PermOptions& opt, double df) {
  if (opt.n_resamples < 1) throw Error(Errc::invalid_argument, "need at least one resample");
  const std::size_t nr = design.n_resamples;
  const bool two_sided = opt.tail == Tail::two_sided;
  PermNull null;
  null.scheme = design.scheme;
  null.tail = opt.tail;
  null.seed = opt.seed;
  null.exhaustive = design.exhaustive;
  null.df = df;
  null.cdts = opt.cdts;
  for (const auto& c : opt.cdts) null.cdt_thresholds.push_back(cdt_stat_threshold(c, df));
  null.max_stats_pos.assign(nr, 0.0);
  null.max_stats_neg.assign(nr, 0.0);
  null.max_extents_pos.assign(opt.cdts.size(), std::vector<std::uint32_t>(nr, 0));
  null.max_extents_neg.assign(opt.cdts.size(), std::vector<std::uint32_t>(nr, 0));

  const Grid& grid = mask.grid();
  const auto idx = mask.indices();
  const std::size_t n = data.n;
  const auto dn = static_cast<double>(n);
  const auto dn1 = static_cast<double>(data.n1);
  const auto dn2 = dn - dn1;
  const double scale = design.scheme == PermScheme::relabel_two_sample ? 1.0 / dn1 + 1.0 / dn2 : 0.0;

  struct Worker {
    ClusterWorkspace ws;
    std::vector<double> t;
    std::vector<double> w;
  };
  const unsigned nw = effective_workers(nr, opt.threads);
  std::vector<Worker> workers;
  workers.reserve(nw);
  for (unsigned k = 0; k < nw; ++k) workers.push_back({ClusterWorkspace(mask, opt.connectivity), {}, {}});
  std::vector<double> observed;

  parallel_for(nr, opt.threads, [&](std::size_t r, unsigned wi) {
    auto& wk = workers[wi];
    wk.t.assign(grid.size(), 0.0);
    design.weights(r, wk.w);
    const double* w = wk.w.data();
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < idx.size(); ++m) {
      double t = 0.0;
      if (!data.dead[m]) {
        const double* row = &data.rows[m * n];
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += w[k] * row[k];
        const double q = data.q[m];
        if (design.scheme == PermScheme::relabel_two_sample) {
          // Centered rows: group means are s/n1 and -s/n2.
          const double ss = q - s * s * scale;
          if (ss > kDegenerateRel * q) t = s * std::sqrt(scale) / std::sqrt(ss / df);
        } else {
          const double ss = q - s * s / dn;
          if (ss > kDegenerateRel * q) t = (s / dn) / std::sqrt(ss / ((dn - 1.0) * dn));
        }
      }
      wk.t[idx[m]] = t;
      hi = std::max(hi, t);
      lo = std::min(lo, t);
    }
    null.max_stats_pos[r] = hi;
    null.max_stats_neg[r] = -lo;
    for (std::size_t c = 0; c < null.cdts.size(); ++c) {
      const double thr = null.cdt_thresholds[c];
      null.max_extents_pos[c][r] = static_cast<std::uint32_t>(wk.ws.max_extent(wk.t, thr, 1));
      if (two_sided) null.max_extents_neg[c][r] = static_cast<std::uint32_t>(wk.ws.max_extent(wk.t, thr, -1));
    }
    if (r == 0) observed = wk.t;
  });
  null.observed = Volume3(grid, std::move(observed));
  return null;
}

std::vector<std::span<const double>> frames(const Volume4& v) {
  std::vector<std::span<const double>> out;
  for (std::size_t t = 0; t < v.frames(); ++t) out.push_back(v.frame(t));
  return out;
}

}  // namespace

const char* to_string(PermScheme s) noexcept {
  return s == PermScheme::relabel_two_sample ? "relabel_two_sample" : "sign_flip_one_sample";
}

const char* to_string(Tail t) noexcept { return t == Tail::one_sided ? "one_sided" : "two_sided"; }

double PermNull::max_stat(std::size_t r) const {
  return tail == Tail::two_sided ? std::max(max_stats_pos[r], max_stats_neg[r]) : max_stats_pos[r];
}

std::uint32_t PermNull::max_extent(std::size_t c, std::size_t r) const {
  return tail == Tail::two_sided ? std::max(max_extents_pos[c][r], max_extents_neg[c][r]) : max_extents_pos[c][r];
}

double cdt_stat_threshold(const CdtSpec& cdt, double df) {
  return dist::t_isf(cdt.p_value(), df);
}

PermNull perm_build_null(const SubjectStack& group1, const SubjectStack& group2, const Mask& mask,
                         const PermOptions& opt) {
  const std::size_t n1 = group1.n_subjects();
  const std::size_t n2 = group2.n_subjects();
  if (n1 < 2 || n2 < 2) throw Error(Errc::too_few_subjects, "two-sample permutation needs 2 per group");
  require_same_dims(group1.betas.grid(), mask.grid());
  require_same_dims(group2.betas.grid(), mask.grid());
  auto f = frames(group1.betas);
  for (auto s : frames(group2.betas)) f.push_back(s);
  const auto data = gather(f, n1, mask, true);
  const auto design = make_design(PermScheme::relabel_two_sample, n1 + n2, n1, opt);
  return run(data, design, mask, opt, static_cast<double>(n1 + n2 - 2));
}

PermNull perm_build_null(const SubjectStack& s, const Mask& mask, const PermOptions& opt) {
  const std::size_t n = s.n_subjects();
  if (n < 2) throw Error(Errc::too_few_subjects, "sign flipping needs at least 2 subjects");
  require_same_dims(s.betas.grid(), mask.grid());
  const auto data = gather(frames(s.betas), n, mask, false);
  const auto design = make_design(PermScheme::sign_flip_one_sample, n, n, opt);
  return run(data, design, mask, opt, static_cast<double>(n - 1));
}

double perm_voxel_fwe_p(double stat_value, const PermNull& null) {
  std::size_t c = 0;
  for (std::size_t r = 0; r < null.n_resamples(); ++r) c += null.max_stat(r) >= stat_value;
  return static_cast<double>(c) / static_cast<double>(null.n_resamples());
}

double perm_cluster_fwe_p(std::size_t extent, const PermNull& null, std::size_t c) {
  if (c >= null.cdts.size()) throw Error(Errc::cdt_missing, "permutation null was built without this CDT");
  std::size_t k = 0;
  for (std::size_t r = 0; r < null.n_resamples(); ++r) k += null.max_extent(c, r) >= extent;
  return static_cast<double>(k) / static_cast<double>(null.n_resamples());
}

double perm_cluster_fwe_p_signed(std::size_t extent, const PermNull& null, std::size_t c, int sign) {
  if (c >= null.cdts.size()) throw Error(Errc::cdt_missing, "permutation null was built without this CDT");
  if (sign < 0 && null.tail != Tail::two_sided) {
    throw Error(Errc::invalid_argument, "one-sided null holds no negative-tail extents");
  }
  const auto& e = sign > 0 ? null.max_extents_pos[c] : null.max_extents_neg[c];
  std::size_t k = 0;
  for (auto v : e) k += v >= extent;
  return static_cast<double>(k) / static_cast<double>(e.size());
}

void write_perm_null(const PermNull& null, const std::filesystem::path& path) {
  detail::LeWriter w;
  w.bytes(kPermMagic);
  w.put(kPermVersion);
  w.put(static_cast<std::uint8_t>(null.scheme));
  w.put(static_cast<std::uint8_t>(null.tail));
  w.put(static_cast<std::uint16_t>(null.cdts.size()));
  w.put(null.seed);
  w.put(static_cast<std::uint64_t>(null.n_resamples()));
  w.put(null.df);
  for (std::size_t c = 0; c < null.cdts.size(); ++c) {
    w.put(null.cdts[c].p_value());
    w.put(null.cdt_thresholds[c]);
  }
  for (double v : null.max_stats_pos) w.put(v);
  for (double v : null.max_stats_neg) w.put(v);
  for (std::size_t c = 0; c < null.cdts.size(); ++c) {
    for (auto v : null.max_extents_pos[c]) w.put(v);
    for (auto v : null.max_extents_neg[c]) w.put(v);
  }
  w.save(path);
}

PermNull read_perm_null(const std::filesystem::path& path) {
  detail::LeReader r(path);
  r.expect(kPermMagic);
  if (r.get<std::uint32_t>() != kPermVersion) throw Error(Errc::malformed_header, "unsupported sidecar version");
  PermNull null;
  const auto scheme = r.get<std::uint8_t>();
  const auto tail = r.get<std::uint8_t>();
  if (scheme > 1 || tail > 1) throw Error(Errc::malformed_header, "bad scheme or tail in sidecar");
  null.scheme = static_cast<PermScheme>(scheme);
  null.tail = static_cast<Tail>(tail);
  const auto n_cdt = r.get<std::uint16_t>();
  null.seed = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  null.df = r.get<double>();
  for (std::uint16_t c = 0; c < n_cdt; ++c) {
    null.cdts.push_back(CdtSpec::from_p(r.get<double>(), null.df));
    null.cdt_thresholds.push_back(r.get<double>());
  }
  null.max_stats_pos.resize(n);
  null.max_stats_neg.resize(n);
  for (auto& v : null.max_stats_pos) v = r.get<double>();
  for (auto& v : null.max_stats_neg) v = r.get<double>();
  null.max_extents_pos.assign(n_cdt, std::vector<std::uint32_t>(n));
  null.max_extents_neg.assign(n_cdt, std::vector<std::uint32_t>(n));
  for (std::uint16_t c = 0; c < n_cdt; ++c) {
    for (auto& v : null.max_extents_pos[c]) v = r.get<std::uint32_t>();
    for (auto& v : null.max_extents_neg[c]) v = r.get<std::uint32_t>();
  }
  r.require_end();
  return null;
}

}  // namespace fwe
