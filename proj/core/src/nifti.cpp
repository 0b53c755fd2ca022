#include "fwe/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "fwe/error.hpp"

namespace fwe {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileOffset = 352;

// Field offsets within the 348-byte NIfTI-1 header.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

class HeaderView {
 public:
  HeaderView(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  [[nodiscard]] T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_ + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io_error, "read failed for " + path.string());
  return bytes;
}

bool supported(std::int16_t code) {
  switch (static_cast<NiftiDatatype>(code)) {
    case NiftiDatatype::uint8:
    case NiftiDatatype::int16:
    case NiftiDatatype::int32:
    case NiftiDatatype::float32:
    case NiftiDatatype::float64:
      return true;
  }
  return false;
}

template <typename T>
void decode(const unsigned char* src, std::size_t n, bool swap, std::vector<double>& out) {
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swap) v = byteswap_value(v);
    out[i] = static_cast<double>(v);
  }
}

std::filesystem::path paired_image_path(const std::filesystem::path& hdr) {
  auto img = hdr;
  const auto ext = hdr.extension().string();
  img.replace_extension(ext == ".HDR" ? ".IMG" : ".img");
  return img;
}

template <typename T>
void encode_integral(std::span<const double> data, std::vector<unsigned char>& out, std::size_t base) {
  constexpr double lo = static_cast<double>(std::numeric_limits<T>::min());
  constexpr double hi = static_cast<double>(std::numeric_limits<T>::max());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = data[i];
    if (!std::isfinite(v) || v != std::nearbyint(v) || v < lo || v > hi) {
      throw Error(Errc::requires_scaling,
                  "value " + std::to_string(v) + " is not representable without scaling");
    }
    const T t = static_cast<T>(v);
    std::memcpy(out.data() + base + i * sizeof(T), &t, sizeof(T));
  }
}

void write_impl(const Grid& grid, std::size_t nt, bool four_d, std::span<const double> data,
                const std::optional<Orientation>& orient, const std::filesystem::path& path,
                NiftiDatatype datatype) {
  if (!supported(static_cast<std::int16_t>(datatype))) {
    throw Error(Errc::unsupported_datatype, "datatype code " + std::to_string(static_cast<int>(datatype)));
  }
  const auto bpv = static_cast<std::size_t>(nifti_bytes_per_voxel(datatype));
  std::vector<unsigned char> buf(kSingleFileOffset + data.size() * bpv, 0);

  put<std::int32_t>(buf, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
  std::array<std::int16_t, 8> dim{four_d ? std::int16_t{4} : std::int16_t{3},
                                  static_cast<std::int16_t>(grid.dims[0]),
                                  static_cast<std::int16_t>(grid.dims[1]),
                                  static_cast<std::int16_t>(grid.dims[2]),
                                  static_cast<std::int16_t>(nt),
                                  1, 1, 1};
  for (std::size_t k = 0; k < 8; ++k) put(buf, off::dim + 2 * k, dim[k]);
  put(buf, off::datatype, static_cast<std::int16_t>(datatype));
  put(buf, off::bitpix, static_cast<std::int16_t>(8 * bpv));

  const Orientation o = orient.value_or(Orientation{});
  put(buf, off::pixdim, o.qfac);
  for (std::size_t a = 0; a < 3; ++a) put(buf, off::pixdim + 4 * (a + 1), static_cast<float>(grid.voxel_mm[a]));
  put(buf, off::vox_offset, static_cast<float>(kSingleFileOffset));
  put(buf, off::scl_slope, 1.0F);
  put(buf, off::scl_inter, 0.0F);
  buf[off::xyzt_units] = 2;  // NIFTI_UNITS_MM
  put(buf, off::qform_code, o.qform_code);
  put(buf, off::sform_code, o.sform_code);
  for (std::size_t k = 0; k < 3; ++k) {
    put(buf, off::quatern_b + 4 * k, o.quatern[k]);
    put(buf, off::qoffset_x + 4 * k, o.qoffset[k]);
  }
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) put(buf, off::srow_x + 16 * r + 4 * c, o.srow[r][c]);
  }
  std::memcpy(buf.data() + off::magic, "n+1\0", 4);

  const std::size_t base = kSingleFileOffset;
  switch (datatype) {
    case NiftiDatatype::uint8: encode_integral<std::uint8_t>(data, buf, base); break;
    case NiftiDatatype::int16: encode_integral<std::int16_t>(data, buf, base); break;
    case NiftiDatatype::int32: encode_integral<std::int32_t>(data, buf, base); break;
    case NiftiDatatype::float32:
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto f = static_cast<float>(data[i]);
        std::memcpy(buf.data() + base + 4 * i, &f, 4);
      }
      break;
    case NiftiDatatype::float64:
      std::memcpy(buf.data() + base, data.data(), 8 * data.size());
      break;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

void check_dims_fit(const Grid& grid, std::size_t nt) {
  for (auto d : grid.dims) {
    if (d > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max())) {
      throw Error(Errc::invalid_argument, "dimension exceeds NIfTI-1 int16 range");
    }
  }
  if (nt > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max())) {
    throw Error(Errc::invalid_argument, "frame count exceeds NIfTI-1 int16 range");
  }
}

}  // namespace

int nifti_bytes_per_voxel(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::uint8: return 1;
    case NiftiDatatype::int16: return 2;
    case NiftiDatatype::int32: return 4;
    case NiftiDatatype::float32: return 4;
    case NiftiDatatype::float64: return 8;
  }
  throw Error(Errc::unsupported_datatype, "unknown datatype");
}

AnyVolume read_nifti(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kHeaderSize) throw Error(Errc::malformed_header, "file shorter than a NIfTI-1 header");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    if (byteswap_value(sizeof_hdr) != static_cast<std::int32_t>(kHeaderSize)) {
      throw Error(Errc::malformed_header, "sizeof_hdr is not 348 in either byte order");
    }
    swap = true;
  }
  const HeaderView h(bytes.data(), swap);

  const bool single = std::memcmp(bytes.data() + off::magic, "n+1\0", 4) == 0;
  const bool paired = std::memcmp(bytes.data() + off::magic, "ni1\0", 4) == 0;
  if (!single && !paired) throw Error(Errc::malformed_header, "bad NIfTI-1 magic");

  std::array<std::int16_t, 8> dim{};
  for (std::size_t k = 0; k < 8; ++k) dim[k] = h.get<std::int16_t>(off::dim + 2 * k);
  const int ndim = dim[0];
  if (ndim < 1 || ndim > 7) throw Error(Errc::malformed_header, "dim[0] out of range");
  for (int k = 1; k <= ndim; ++k) {
    if (dim[k] < 1) throw Error(Errc::malformed_header, "non-positive dimension");
  }
  for (int k = 5; k <= ndim; ++k) {
    if (dim[k] != 1) throw Error(Errc::malformed_header, "more than four dimensions");
  }

  const auto datatype = h.get<std::int16_t>(off::datatype);
  if (!supported(datatype)) {
    throw Error(Errc::unsupported_datatype, "datatype code " + std::to_string(datatype));
  }
  const auto dt = static_cast<NiftiDatatype>(datatype);

  Grid grid;
  for (int a = 0; a < 3; ++a) {
    const bool used = a + 1 <= ndim;
    grid.dims[a] = used ? static_cast<std::size_t>(dim[a + 1]) : 1;
    const float p = h.get<float>(off::pixdim + 4 * (a + 1));
    if (used && (!(p > 0.0F) || !std::isfinite(p))) {
      throw Error(Errc::malformed_header, "voxel size must be positive");
    }
    grid.voxel_mm[a] = (p > 0.0F && std::isfinite(p)) ? static_cast<double>(p) : 1.0;
  }
  const bool four_d = ndim >= 4;
  const std::size_t nt = four_d ? static_cast<std::size_t>(dim[4]) : 1;

  Orientation o;
  o.qfac = h.get<float>(off::pixdim);
  o.qform_code = h.get<std::int16_t>(off::qform_code);
  o.sform_code = h.get<std::int16_t>(off::sform_code);
  for (std::size_t k = 0; k < 3; ++k) {
    o.quatern[k] = h.get<float>(off::quatern_b + 4 * k);
    o.qoffset[k] = h.get<float>(off::qoffset_x + 4 * k);
  }
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) o.srow[r][c] = h.get<float>(off::srow_x + 16 * r + 4 * c);
  }

  const float vox_offset = h.get<float>(off::vox_offset);
  std::vector<unsigned char> image_file;
  const std::vector<unsigned char>* payload = &bytes;
  std::size_t offset = 0;
  if (single) {
    if (!(vox_offset >= static_cast<float>(kSingleFileOffset))) {
      throw Error(Errc::malformed_header, "single-file vox_offset below 352");
    }
    offset = static_cast<std::size_t>(vox_offset);
  } else {
    if (!(vox_offset >= 0.0F)) throw Error(Errc::malformed_header, "negative vox_offset");
    image_file = slurp(paired_image_path(path));
    payload = &image_file;
    offset = static_cast<std::size_t>(vox_offset);
  }

  const std::size_t n = grid.size() * nt;
  const auto bpv = static_cast<std::size_t>(nifti_bytes_per_voxel(dt));
  if (payload->size() < offset || payload->size() - offset < n * bpv) {
    throw Error(Errc::truncated_data, "payload shorter than dimensions imply");
  }

  std::vector<double> data(n);
  const unsigned char* src = payload->data() + offset;
  switch (dt) {
    case NiftiDatatype::uint8: decode<std::uint8_t>(src, n, swap, data); break;
    case NiftiDatatype::int16: decode<std::int16_t>(src, n, swap, data); break;
    case NiftiDatatype::int32: decode<std::int32_t>(src, n, swap, data); break;
    case NiftiDatatype::float32: decode<float>(src, n, swap, data); break;
    case NiftiDatatype::float64: decode<double>(src, n, swap, data); break;
  }

  const float slope = h.get<float>(off::scl_slope);
  const float inter = h.get<float>(off::scl_inter);
  if (slope != 0.0F && std::isfinite(slope) && !(slope == 1.0F && inter == 0.0F)) {
    for (auto& v : data) v = v * static_cast<double>(slope) + static_cast<double>(inter);
  }

  if (four_d) return Volume4(grid, nt, std::move(data), o);
  return Volume3(grid, std::move(data), o);
}

Volume3 read_nifti3(const std::filesystem::path& path) {
  auto any = read_nifti(path);
  if (auto* v3 = std::get_if<Volume3>(&any)) return std::move(*v3);
  auto& v4 = std::get<Volume4>(any);
  if (v4.frames() != 1) throw Error(Errc::invalid_argument, path.string() + " has more than one frame");
  return v4.frame_volume(0);
}

Volume4 read_nifti4(const std::filesystem::path& path) {
  auto any = read_nifti(path);
  if (auto* v4 = std::get_if<Volume4>(&any)) return std::move(*v4);
  auto& v3 = std::get<Volume3>(any);
  const Grid g = v3.grid();
  auto orient = v3.orientation();
  return Volume4(g, 1, std::move(v3).release(), orient);
}

void write_nifti(const Volume3& v, const std::filesystem::path& path, NiftiDatatype datatype) {
  check_dims_fit(v.grid(), 1);
  write_impl(v.grid(), 1, false, v.data(), v.orientation(), path, datatype);
}

void write_nifti(const Volume4& v, const std::filesystem::path& path, NiftiDatatype datatype) {
  check_dims_fit(v.grid(), v.frames());
  write_impl(v.grid(), v.frames(), true, v.data(), v.orientation(), path, datatype);
}

}  // namespace fwe
