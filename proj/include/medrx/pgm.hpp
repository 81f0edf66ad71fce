#pragma once

// Binary PGM (P5), 8-bit samples.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/tensor.hpp"
#include "medrx/weights_io.hpp"

namespace medrx {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }

  /// [1 x H x W] with values scaled to [0, 1].
  Tensor to_tensor() const {
    Tensor t({1, height, width});
    for (std::size_t i = 0; i < pixels.size(); ++i) t[i] = static_cast<float>(pixels[i]) / 255.0f;
    return t;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) throw FormatError(std::string("pgm: ") + what + " too large");
    }
    if (!digits) throw FormatError(std::string("pgm: missing ") + what);
    return v;
  };
  if (bytes.substr(0, 2) != "P5") throw FormatError("pgm: not a binary PGM (expected P5)");
  pos = 2;
  GrayImage img;
  img.width = number("width");
  img.height = number("height");
  const std::size_t maxval = number("maxval");
  if (maxval == 0 || maxval > 255) throw FormatError("pgm: only 8-bit images are supported");
  if (img.width == 0 || img.height == 0) throw FormatError("pgm: zero image size");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pgm: malformed header");
  }
  ++pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos < n) throw FormatError("pgm: truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      if (p > maxval) throw FormatError("pgm: sample exceeds maxval");
      p = static_cast<std::uint8_t>((p * 255u + maxval / 2) / maxval);
    }
  }
  return img;
}

inline GrayImage load_pgm(const std::string& path) { return decode_pgm(read_file(path)); }
inline void save_pgm(const GrayImage& img, const std::string& path) {
  write_file(path, encode_pgm(img));
}

}  // namespace medrx
