#pragma once

// Little-endian sidecar encoding shared by the null-distribution writers.

#include <iterator>
#include <type_traits>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "fwe/error.hpp"

namespace fwe::detail {

class LeWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  template <class T>
  void put(T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    U u;
    std::memcpy(&u, &v, sizeof u);
    for (std::size_t i = 0; i < sizeof u; ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class LeReader {
 public:
  explicit LeReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path_);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void expect(std::string_view magic) {
    need(magic.size());
    if (std::string_view(buf_.data() + pos_, magic.size()) != magic) {
      throw Error(Errc::malformed_header, path_ + " is not a " + std::string(magic) + " file");
    }
    pos_ += magic.size();
  }
  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof u; ++i) {
      u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof u;
    T v;
    std::memcpy(&v, &u, sizeof v);
    return v;
  }
  void require_end() const {
    if (pos_ != buf_.size()) throw Error(Errc::malformed_header, path_ + " has trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw Error(Errc::truncated_data, path_ + " is truncated");
  }
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace fwe::detail
