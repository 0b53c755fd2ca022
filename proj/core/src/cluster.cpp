#include "fwe/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "fwe/error.hpp"

namespace fwe {

const char* to_string(Connectivity c) noexcept {
  switch (c) {
    case Connectivity::faces6: return "faces6";
    case Connectivity::edges18: return "edges18";
    case Connectivity::corners26: return "corners26";
  }
  return "?";
}

Connectivity parse_connectivity(const std::string& name) {
  if (name == "faces6" || name == "6") return Connectivity::faces6;
  if (name == "edges18" || name == "18") return Connectivity::edges18;
  if (name == "corners26" || name == "26") return Connectivity::corners26;
  throw Error(Errc::invalid_argument, "unknown connectivity '" + name + "'");
}

CdtSpec CdtSpec::from_p(double p, double df) {
  CdtSpec c;
  c.p_uncorrected = p;
  c.df = df;
  c.validate();
  return c;
}

CdtSpec CdtSpec::from_z(double z) {
  CdtSpec c;
  c.z_equivalent_value = z;
  c.validate();
  return c;
}

double CdtSpec::z_equivalent() const {
  return z_equivalent_value ? *z_equivalent_value : dist::normal_isf(*p_uncorrected);
}

double CdtSpec::p_value() const {
  return p_uncorrected ? *p_uncorrected : dist::normal_sf(*z_equivalent_value);
}

CdtSpec CdtSpec::with_df(double new_df) const {
  CdtSpec c = *this;
  c.df = new_df;
  c.validate();
  return c;
}

void CdtSpec::validate() const {
  if (p_uncorrected.has_value() == z_equivalent_value.has_value()) {
    throw Error(Errc::invalid_argument, "a CDT needs exactly one of p or z");
  }
  if (p_uncorrected && !(*p_uncorrected > 0.0 && *p_uncorrected < 1.0)) {
    throw Error(Errc::invalid_argument, "CDT p must lie in (0, 1)");
  }
  if (z_equivalent_value && !std::isfinite(*z_equivalent_value)) {
    throw Error(Errc::invalid_argument, "CDT z must be finite");
  }
  if (!(df >= 1.0)) throw Error(Errc::invalid_argument, "CDT df must be at least 1");
}

double cdt_to_threshold(const CdtSpec& c) {
  c.validate();
  if (c.z_equivalent_value) return *c.z_equivalent_value;
  return dist::t_isf(*c.p_uncorrected, c.df);
}

std::vector<std::array<int, 3>> backward_neighbors(Connectivity c) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const bool backward = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
        if (!backward) continue;
        const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
        const int limit = c == Connectivity::faces6 ? 1 : c == Connectivity::edges18 ? 2 : 3;
        if (order <= limit) out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

namespace {

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

bool in_bounds(const Grid& g, const std::array<std::size_t, 3>& c, const std::array<int, 3>& d) {
  for (int a = 0; a < 3; ++a) {
    const auto v = static_cast<std::int64_t>(c[a]) + d[a];
    if (v < 0 || v >= static_cast<std::int64_t>(g.dims[a])) return false;
  }
  return true;
}

std::int64_t offset_of(const Grid& g, const std::array<int, 3>& d) {
  return d[0] + static_cast<std::int64_t>(g.dims[0]) * (d[1] + static_cast<std::int64_t>(g.dims[1]) * d[2]);
}

bool supra(double v, double threshold, int sign) { return sign > 0 ? v > threshold : v < -threshold; }

}  // namespace

Mask ClusterTable::cluster_mask(const Grid& grid) const {
  std::vector<std::uint8_t> inside(grid.size(), 0);
  if (labels.size() == grid.size()) {
    for (std::size_t i = 0; i < labels.size(); ++i) inside[i] = labels[i] != 0 ? 1 : 0;
  }
  return Mask(grid, std::move(inside));
}

ClusterTable label_clusters(const Volume3& stat, double threshold, const Mask& mask, Connectivity connectivity,
                            int sign) {
  if (!std::isfinite(threshold)) throw Error(Errc::invalid_argument, "threshold must be finite");
  if (sign != 1 && sign != -1) throw Error(Errc::invalid_argument, "sign must be +1 or -1");
  const Grid& g = stat.grid();
  require_same_dims(g, mask.grid());
  const auto deltas = backward_neighbors(connectivity);
  std::vector<std::int64_t> offsets;
  for (const auto& d : deltas) offsets.push_back(offset_of(g, d));

  const auto v = stat.data();
  std::vector<std::uint8_t> active(g.size(), 0);
  std::vector<std::uint32_t> parent(g.size(), 0);
  std::vector<std::uint32_t> members;
  const auto flags = mask.flags();
  for (auto i : mask.indices()) {
    if (!supra(v[i], threshold, sign)) continue;
    active[i] = 1;
    parent[i] = i;
    members.push_back(i);
    const auto c = g.coords(i);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      if (!in_bounds(g, c, deltas[k])) continue;
      const auto j = static_cast<std::uint32_t>(static_cast<std::int64_t>(i) + offsets[k]);
      if (!active[j] || !flags[j]) continue;
      const auto ri = find_root(parent, i);
      const auto rj = find_root(parent, j);
      if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  }

  struct Acc {
    std::size_t size = 0;
    double peak = 0.0;
    std::size_t peak_index = 0;
  };
  std::map<std::uint32_t, Acc> comps;
  for (auto i : members) {
    auto& a = comps[find_root(parent, i)];
    const bool better = a.size == 0 || (sign > 0 ? v[i] > a.peak : v[i] < a.peak);
    if (better) {
      a.peak = v[i];
      a.peak_index = i;
    }
    ++a.size;
  }
  std::vector<std::pair<std::uint32_t, Acc>> order(comps.begin(), comps.end());
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
    if (x.second.size != y.second.size) return x.second.size > y.second.size;
    return x.second.peak_index < y.second.peak_index;
  });

  ClusterTable table;
  table.connectivity = connectivity;
  table.threshold_used = threshold;
  table.sign = sign;
  table.labels.assign(g.size(), 0);
  std::map<std::uint32_t, std::uint32_t> id_of;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& [root, a] = order[k];
    Cluster c;
    c.id = static_cast<std::uint32_t>(k + 1);
    c.size_voxels = a.size;
    c.size_mm3 = static_cast<double>(a.size) * g.voxel_volume_mm3();
    c.peak_value = a.peak;
    c.peak_index = a.peak_index;
    c.sign = sign;
    table.clusters.push_back(c);
    id_of[root] = c.id;
  }
  for (auto i : members) table.labels[i] = id_of[find_root(parent, i)];
  return table;
}

std::size_t max_extent(const ClusterTable& t) noexcept {
  std::size_t m = 0;
  for (const auto& c : t.clusters) m = std::max(m, c.size_voxels);
  return m;
}

ClusterWorkspace::ClusterWorkspace(const Mask& mask, Connectivity connectivity)
    : mask_(&mask), connectivity_(connectivity), deltas_(backward_neighbors(connectivity)) {
  const Grid& g = mask.grid();
  for (const auto& d : deltas_) offsets_.push_back(offset_of(g, d));
  parent_.assign(g.size(), 0);
  size_.assign(g.size(), 0);
  active_.assign(g.size(), 0);
}

std::uint32_t ClusterWorkspace::find(std::uint32_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

std::size_t ClusterWorkspace::max_extent(std::span<const double> stat, double threshold, int sign) {
  const Grid& g = mask_->grid();
  touched_.clear();
  std::size_t best = 0;
  for (auto i : mask_->indices()) {
    if (!supra(stat[i], threshold, sign)) continue;
    active_[i] = 1;
    parent_[i] = i;
    size_[i] = 1;
    touched_.push_back(i);
    const auto c = g.coords(i);
    for (std::size_t k = 0; k < deltas_.size(); ++k) {
      if (!in_bounds(g, c, deltas_[k])) continue;
      const auto j = static_cast<std::uint32_t>(static_cast<std::int64_t>(i) + offsets_[k]);
      if (!active_[j]) continue;
      auto ri = find(i);
      auto rj = find(j);
      if (ri == rj) continue;
      if (size_[ri] < size_[rj]) std::swap(ri, rj);
      parent_[rj] = ri;
      size_[ri] += size_[rj];
    }
    best = std::max<std::size_t>(best, size_[find(i)]);
  }
  for (auto i : touched_) active_[i] = 0;
  return best;
}

void write_cluster_csv(std::span<const ClusterTable> tables, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << "id,size_voxels,size_mm3,peak_value,fwe_p,sign\n";
  char buf[160];
  for (const auto& t : tables) {
    for (const auto& c : t.clusters) {
      char p[32] = "NA";
      if (c.fwe_p) std::snprintf(p, sizeof p, "%.6g", *c.fwe_p);
      std::snprintf(buf, sizeof buf, "%u,%zu,%.6g,%.6g,%s,%d\n", c.id, c.size_voxels, c.size_mm3, c.peak_value, p,
                    c.sign);
      out << buf;
    }
  }
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

}  // namespace fwe
