#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "fwe/volume.hpp"

namespace fwe {

/// NIfTI-1 datatype codes supported for reading and writing.
enum class NiftiDatatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

[[nodiscard]] int nifti_bytes_per_voxel(NiftiDatatype dt);

using AnyVolume = std::variant<Volume3, Volume4>;

/// Reads a single-file ("n+1") or header/image pair ("ni1") NIfTI-1 volume in
/// either byte order. A file with dim[0] >= 4 and dim[4] >= 1 yields a Volume4.
/// Scaling (scl_slope, scl_inter) is applied when the slope is nonzero.
[[nodiscard]] AnyVolume read_nifti(const std::filesystem::path& path);

/// Convenience wrappers; a 4D file with one frame is accepted as 3D and vice versa.
[[nodiscard]] Volume3 read_nifti3(const std::filesystem::path& path);
[[nodiscard]] Volume4 read_nifti4(const std::filesystem::path& path);

/// Writes a single-file NIfTI-1 in native byte order: 348-byte header, 4 zero
/// bytes, payload at offset 352. Integer datatypes refuse values that would
/// need scaling or clipping (Errc::requires_scaling).
void write_nifti(const Volume3& v, const std::filesystem::path& path,
                 NiftiDatatype datatype = NiftiDatatype::float32);
void write_nifti(const Volume4& v, const std::filesystem::path& path,
                 NiftiDatatype datatype = NiftiDatatype::float32);

}  // namespace fwe
