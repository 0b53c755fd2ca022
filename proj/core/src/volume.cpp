#include "fwe/volume.hpp"

#include <cmath>
#include <string>

#include "fwe/error.hpp"

namespace fwe {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IoError";
    case Errc::unsupported_datatype: return "UnsupportedDatatype";
    case Errc::malformed_header: return "MalformedHeader";
    case Errc::truncated_data: return "TruncatedData";
    case Errc::requires_scaling: return "RequiresScaling";
    case Errc::kernel_too_wide: return "KernelTooWide";
    case Errc::duration_zero: return "DurationZero";
    case Errc::rank_deficient_design: return "RankDeficientDesign";
    case Errc::missing_variances: return "MissingVariances";
    case Errc::group_too_large: return "GroupTooLarge";
    case Errc::too_few_subjects: return "TooFewSubjects";
    case Errc::empty_overlap: return "EmptyOverlap";
    case Errc::degenerate_residuals: return "DegenerateResiduals";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::cdt_too_low: return "CdtTooLow";
    case Errc::insufficient_iterations: return "InsufficientIterations";
    case Errc::cdt_missing: return "CdtMissing";
    case Errc::mismatched_inputs: return "MismatchedInputs";
  }
  return "Unknown";
}

bool is_statistical_precondition(Errc code) noexcept {
  switch (code) {
    case Errc::cdt_too_low:
    case Errc::insufficient_iterations:
    case Errc::cdt_missing:
    case Errc::too_few_subjects:
    case Errc::group_too_large:
    case Errc::missing_variances:
    case Errc::rank_deficient_design:
    case Errc::degenerate_residuals:
    case Errc::empty_overlap:
    case Errc::kernel_too_wide:
    case Errc::mismatched_inputs:
      return true;
    default:
      return false;
  }
}

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) {
      throw Error(Errc::invalid_argument, "grid dimension " + std::to_string(a) + " is zero");
    }
    if (!(voxel_mm[a] > 0.0) || !std::isfinite(voxel_mm[a])) {
      throw Error(Errc::invalid_argument, "voxel size must be positive and finite");
    }
  }
}

Grid cube_grid(std::size_t n, double voxel_mm) {
  Grid g{{n, n, n}, {voxel_mm, voxel_mm, voxel_mm}};
  g.validate();
  return g;
}

Volume3::Volume3(Grid grid, std::vector<double> data, std::optional<Orientation> orientation)
    : grid_(grid), data_(std::move(data)), orientation_(orientation) {
  grid_.validate();
  if (data_.size() != grid_.size()) {
    throw Error(Errc::invalid_argument, "volume data length " + std::to_string(data_.size()) +
                                            " does not match grid size " +
                                            std::to_string(grid_.size()));
  }
}

Volume3 Volume3::zeros(const Grid& grid) { return Volume3(grid, std::vector<double>(grid.size(), 0.0)); }

Volume4::Volume4(Grid grid, std::size_t nt, std::vector<double> data,
                 std::optional<Orientation> orientation)
    : grid_(grid), nt_(nt), data_(std::move(data)), orientation_(orientation) {
  grid_.validate();
  if (nt_ == 0) throw Error(Errc::invalid_argument, "a 4D volume needs at least one frame");
  if (data_.size() != nt_ * grid_.size()) {
    throw Error(Errc::invalid_argument, "4D data length does not match nt * grid size");
  }
}

Volume4 Volume4::stack(std::span<const Volume3> frames) {
  if (frames.empty()) throw Error(Errc::invalid_argument, "cannot stack zero frames");
  const Grid& g = frames.front().grid();
  std::vector<double> data;
  data.reserve(frames.size() * g.size());
  for (const auto& f : frames) {
    require_same_dims(g, f.grid());
    data.insert(data.end(), f.data().begin(), f.data().end());
  }
  return Volume4(g, frames.size(), std::move(data), frames.front().orientation());
}

Volume3 Volume4::frame_volume(std::size_t t) const {
  auto f = frame(t);
  return Volume3(grid_, std::vector<double>(f.begin(), f.end()), orientation_);
}

Mask::Mask(Grid grid, std::vector<std::uint8_t> inside) : grid_(grid), inside_(std::move(inside)) {
  grid_.validate();
  if (inside_.size() != grid_.size()) {
    throw Error(Errc::invalid_argument, "mask length does not match grid size");
  }
  for (std::size_t i = 0; i < inside_.size(); ++i) {
    if (inside_[i] != 0) {
      inside_[i] = 1;
      indices_.push_back(static_cast<std::uint32_t>(i));
    }
  }
}

Mask Mask::full(const Grid& grid) { return Mask(grid, std::vector<std::uint8_t>(grid.size(), 1)); }

Mask Mask::from_volume(const Volume3& v) {
  std::vector<std::uint8_t> inside(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) inside[i] = (v[i] != 0.0 && std::isfinite(v[i])) ? 1 : 0;
  return Mask(v.grid(), std::move(inside));
}

void Mask::require_nonempty() const {
  if (indices_.empty()) throw Error(Errc::invalid_argument, "mask has no voxels inside");
}

Mask make_ellipsoid_mask(const Dims& dims, const Spacing& voxel_size_mm,
                         const std::array<double, 3>& semi_axes_mm) {
  for (double r : semi_axes_mm) {
    if (!(r > 0.0)) throw Error(Errc::invalid_argument, "ellipsoid semi-axes must be positive");
  }
  Grid grid{dims, voxel_size_mm};
  grid.validate();
  std::array<double, 3> center{};
  for (int a = 0; a < 3; ++a) center[a] = 0.5 * static_cast<double>(dims[a] - 1);

  std::vector<std::uint8_t> inside(grid.size(), 0);
  std::size_t i = 0;
  for (std::size_t z = 0; z < dims[2]; ++z) {
    const double dz = (static_cast<double>(z) - center[2]) * voxel_size_mm[2] / semi_axes_mm[2];
    for (std::size_t y = 0; y < dims[1]; ++y) {
      const double dy = (static_cast<double>(y) - center[1]) * voxel_size_mm[1] / semi_axes_mm[1];
      for (std::size_t x = 0; x < dims[0]; ++x, ++i) {
        const double dx = (static_cast<double>(x) - center[0]) * voxel_size_mm[0] / semi_axes_mm[0];
        inside[i] = (dx * dx + dy * dy + dz * dz <= 1.0) ? 1 : 0;
      }
    }
  }
  return Mask(grid, std::move(inside));
}

Volume3 apply_mask(const Volume3& v, const Mask& mask) {
  require_same_dims(v.grid(), mask.grid());
  std::vector<double> out(v.size(), 0.0);
  for (auto i : mask.indices()) out[i] = v[i];
  return Volume3(v.grid(), std::move(out), v.orientation());
}

void require_same_dims(const Grid& a, const Grid& b) {
  if (a.dims != b.dims) throw Error(Errc::dim_mismatch, "grid dimensions differ");
}

}  // namespace fwe
