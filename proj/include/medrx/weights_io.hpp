#pragma once

// RXW1 weight files, all integers little-endian:
//
//   "RXW1"  u32 tensor_count
//   per tensor:  u16 name_len  name (UTF-8)  u8 rank  rank x u32 dims
//                f32 payload, row-major, product(dims) values
//
// Tensors are written in name order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/tensor.hpp"
#include "medrx/utf8.hpp"

namespace medrx {

inline constexpr std::string_view kWeightsMagic = "RXW1";

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("RXW1: truncated " + std::string(what) + " at offset " +
                        std::to_string(pos_) + " (need " + std::to_string(n) + " bytes, " +
                        std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_weights(const WeightMap& weights) {
  std::string out(kWeightsMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, t] : weights) {
    if (name.size() > UINT16_MAX) throw FormatError("RXW1: tensor name too long: " + name);
    if (t.rank() > UINT8_MAX) throw FormatError("RXW1: rank too large for " + name);
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) {
      if (d > UINT32_MAX) throw FormatError("RXW1: dimension too large in " + name);
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (float v : t.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline WeightMap decode_weights(std::string_view bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.take(kWeightsMagic.size(), "magic");
  if (magic != kWeightsMagic) {
    throw FormatError("RXW1: bad magic '" + std::string(magic) + "' at offset 0");
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  WeightMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_offset = in.offset();
    const auto name_len = in.get<std::uint16_t>("name length");
    const std::string name(in.take(name_len, "tensor name"));
    try {
      utf8_decode(name);
    } catch (const FormatError&) {
      throw FormatError("RXW1: tensor name at offset " + std::to_string(entry_offset) +
                        " is not valid UTF-8");
    }
    if (out.count(name)) {
      throw FormatError("RXW1: duplicate tensor name '" + name + "' at offset " +
                        std::to_string(entry_offset));
    }
    const auto rank = in.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const std::size_t dim_offset = in.offset();
      const auto d = in.get<std::uint32_t>("dimension");
      if (d == 0) {
        throw FormatError("RXW1: zero dimension in '" + name + "' at offset " +
                          std::to_string(dim_offset));
      }
      shape.push_back(d);
    }
    const std::size_t n = shape_numel(shape);
    if (n > (bytes.size() - in.offset()) / 4) {
      throw FormatError("RXW1: truncated payload for '" + name + "' at offset " +
                        std::to_string(in.offset()));
    }
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(in.get<std::uint32_t>("payload"));
    out.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) {
    throw FormatError("RXW1: trailing bytes at offset " + std::to_string(in.offset()));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(f), {});
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline void save_weights(const WeightMap& weights, const std::string& path) {
  write_file(path, encode_weights(weights));
}

inline WeightMap load_weights(const std::string& path) { return decode_weights(read_file(path)); }

}  // namespace medrx
