#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fwe {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Voxel lattice: counts per axis and voxel edge lengths in millimeters.
/// Linear indexing is x-fastest: index = x + nx * (y + ny * z).
struct Grid {
  Dims dims{1, 1, 1};
  Spacing voxel_mm{1.0, 1.0, 1.0};

  [[nodiscard]] std::size_t size() const noexcept { return dims[0] * dims[1] * dims[2]; }
  [[nodiscard]] double voxel_volume_mm3() const noexcept {
    return voxel_mm[0] * voxel_mm[1] * voxel_mm[2];
  }
  [[nodiscard]] std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims[0] * (y + dims[1] * z);
  }
  [[nodiscard]] std::array<std::size_t, 3> coords(std::size_t i) const noexcept {
    return {i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])};
  }
  [[nodiscard]] std::size_t stride(int axis) const noexcept {
    return axis == 0 ? 1 : axis == 1 ? dims[0] : dims[0] * dims[1];
  }

  /// Throws Error(invalid_argument) unless every count and voxel size is positive and finite.
  void validate() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

[[nodiscard]] Grid cube_grid(std::size_t n, double voxel_mm);

/// Orientation fields carried through NIfTI round trips. Analysis ignores them.
struct Orientation {
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float qfac = 1.0F;
  std::array<float, 3> quatern{};
  std::array<float, 3> qoffset{};
  std::array<std::array<float, 4>, 3> srow{};

  friend bool operator==(const Orientation&, const Orientation&) = default;
};

/// Dense scalar volume. Immutable once built.
class Volume3 {
 public:
  Volume3() = default;
  Volume3(Grid grid, std::vector<double> data, std::optional<Orientation> orientation = {});

  [[nodiscard]] static Volume3 zeros(const Grid& grid);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const Dims& dims() const noexcept { return grid_.dims; }
  [[nodiscard]] const Spacing& voxel_mm() const noexcept { return grid_.voxel_mm; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return data_[i]; }
  [[nodiscard]] double at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[grid_.index(x, y, z)];
  }
  [[nodiscard]] const std::optional<Orientation>& orientation() const noexcept { return orientation_; }

  /// Moves the payload out, leaving this volume empty.
  [[nodiscard]] std::vector<double> release() && { return std::move(data_); }

 private:
  Grid grid_{};
  std::vector<double> data_;
  std::optional<Orientation> orientation_;
};

/// A stack of frames (time points or subjects) sharing one grid.
class Volume4 {
 public:
  Volume4() = default;
  Volume4(Grid grid, std::size_t nt, std::vector<double> data,
          std::optional<Orientation> orientation = {});

  [[nodiscard]] static Volume4 stack(std::span<const Volume3> frames);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::size_t frames() const noexcept { return nt_; }
  [[nodiscard]] std::size_t frame_size() const noexcept { return grid_.size(); }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<const double> frame(std::size_t t) const noexcept {
    return std::span<const double>(data_).subspan(t * grid_.size(), grid_.size());
  }
  [[nodiscard]] Volume3 frame_volume(std::size_t t) const;
  [[nodiscard]] const std::optional<Orientation>& orientation() const noexcept { return orientation_; }

 private:
  Grid grid_{};
  std::size_t nt_ = 0;
  std::vector<double> data_;
  std::optional<Orientation> orientation_;
};

/// Boolean search region. Inside voxels are also listed in ascending linear order.
class Mask {
 public:
  Mask() = default;
  Mask(Grid grid, std::vector<std::uint8_t> inside);

  [[nodiscard]] static Mask full(const Grid& grid);
  /// Voxels whose value is nonzero and finite.
  [[nodiscard]] static Mask from_volume(const Volume3& v);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const Dims& dims() const noexcept { return grid_.dims; }
  [[nodiscard]] bool inside(std::size_t i) const noexcept { return inside_[i] != 0; }
  [[nodiscard]] std::span<const std::uint8_t> flags() const noexcept { return inside_; }
  [[nodiscard]] std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  [[nodiscard]] std::size_t n_inside() const noexcept { return indices_.size(); }
  [[nodiscard]] double volume_mm3() const noexcept {
    return static_cast<double>(n_inside()) * grid_.voxel_volume_mm3();
  }

  /// Throws Error(invalid_argument) when the mask is empty.
  void require_nonempty() const;

 private:
  Grid grid_{};
  std::vector<std::uint8_t> inside_;
  std::vector<std::uint32_t> indices_;
};

/// A voxel is inside when its center satisfies sum((c_a - center_a)/r_a)^2 <= 1,
/// with center the grid center and coordinates in millimeters.
[[nodiscard]] Mask make_ellipsoid_mask(const Dims& dims, const Spacing& voxel_size_mm,
                                       const std::array<double, 3>& semi_axes_mm);

/// Copy of `v` with every voxel outside `mask` set to zero.
[[nodiscard]] Volume3 apply_mask(const Volume3& v, const Mask& mask);

void require_same_dims(const Grid& a, const Grid& b);

}  // namespace fwe
