#ifndef GTD_CONTAINER_HPP
#define GTD_CONTAINER_HPP

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "gtd/tensor.hpp"

namespace gtd {

// Named-array container, all integers little-endian:
//   "GTD1" | u32 version | u32 array count
//   per array: u16 name length | name | u8 dtype (0 = f64) | u8 ndim | u32 dims[ndim] | f64 payload
//   u32 text length | text (config, RNG state, free-form metadata)

inline constexpr char kContainerMagic[4] = {'G', 'T', 'D', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 0;

struct NamedArray {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct ArrayContainer {
  std::vector<NamedArray> arrays;
  std::string text;

  const Tensor* find(std::string_view name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a.tensor;
    }
    return nullptr;
  }

  const Tensor& get(std::string_view name) const {
    const Tensor* t = find(name);
    if (!t) throw FormatError("container has no array named '" + std::string(name) + "'");
    return *t;
  }

  friend bool operator==(const ArrayContainer&, const ArrayContainer&) = default;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("container truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_container(const ArrayContainer& c) {
  std::string out(kContainerMagic, 4);
  detail::put_le<std::uint32_t>(out, kContainerVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    if (a.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("array name too long");
    if (a.tensor.rank() > 255) throw FormatError("array rank too large");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out += a.name;
    out.push_back(static_cast<char>(kDtypeF64));
    out.push_back(static_cast<char>(a.tensor.rank()));
    for (auto d : a.tensor.dims()) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : a.tensor.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.text.size()));
  out += c.text;
  return out;
}

inline ArrayContainer decode_container(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(4) != std::string_view(kContainerMagic, 4)) throw FormatError("bad container magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  ArrayContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name(r.take(name_len));
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kDtypeF64) throw FormatError("unknown dtype code " + std::to_string(dtype) + " in '" + name + "'");
    const auto ndim = r.get<std::uint8_t>();
    Dims dims;
    for (std::uint8_t k = 0; k < ndim; ++k) {
      const auto d = r.get<std::uint32_t>();
      if (d == 0) throw FormatError("zero extent in array '" + name + "'");
      dims.push_back(d);
    }
    std::vector<double> data(dims_volume(dims));
    for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
    c.arrays.push_back({std::move(name), Tensor(std::move(dims), std::move(data))});
  }
  const auto text_len = r.get<std::uint32_t>();
  c.text = std::string(r.take(text_len));
  if (!r.done()) throw FormatError("trailing bytes after container");
  return c;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

inline void write_container(const std::filesystem::path& path, const ArrayContainer& c) {
  write_file_bytes(path, encode_container(c));
}

inline ArrayContainer read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace gtd

#endif  // GTD_CONTAINER_HPP
