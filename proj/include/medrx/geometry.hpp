#pragma once

// Axis-aligned boxes and binary masks in continuous pixel coordinates: pixel
// (x, y) covers [x, x+1) x [y, y+1), so a box [x1, x2) spans x2 - x1 pixels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "medrx/errors.hpp"

namespace medrx {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline Box clamp_box(const Box& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

/// Row-major binary image mask.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  bool empty() const { return bits.empty(); }
  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v = true) { bits[y * width + x] = v ? 1 : 0; }

  std::size_t area() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }

  /// Every pixel whose center lies inside the box.
  static BinaryMask from_box(const Box& b, std::size_t h, std::size_t w) {
    BinaryMask m(h, w);
    for (std::size_t y = 0; y < h; ++y) {
      const double cy = static_cast<double>(y) + 0.5;
      if (cy < b.y1 || cy >= b.y2) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const double cx = static_cast<double>(x) + 0.5;
        if (cx >= b.x1 && cx < b.x2) m.set(y, x);
      }
    }
    return m;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

inline double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("mask iou: size mismatch");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Uncompressed run-length encoding over the row-major pixel order. Runs
/// alternate starting with a (possibly zero-length) run of unset pixels.
struct Rle {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

inline Rle rle_encode(const BinaryMask& m) {
  Rle r{m.height, m.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t b : m.bits) {
    if (b != current) {
      r.counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  r.counts.push_back(run);
  return r;
}

inline BinaryMask rle_decode(const Rle& r) {
  BinaryMask m(r.height, r.width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t c : r.counts) {
    if (pos + c > m.bits.size()) throw FormatError("rle: runs exceed mask size");
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(pos), c, value);
    pos += c;
    value ^= 1;
  }
  if (pos != m.bits.size()) {
    throw FormatError("rle: runs cover " + std::to_string(pos) + " of " +
                      std::to_string(m.bits.size()) + " pixels");
  }
  return m;
}

}  // namespace medrx
