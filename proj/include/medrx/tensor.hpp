#pragma once

// Dense row-major float32 tensors and the handful of kernels the detector
// and recognizer are built from. Every kernel is a pure function with a fixed
// accumulation order, so results are bit-reproducible run to run.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "medrx/errors.hpp"

namespace medrx {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

class Tensor {
 public:
  /// Rank-0 scalar holding 0.
  Tensor() : data_(1, 0.0f) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_numel(shape_), 0.0f);
  }

  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor filled(Shape shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  /// Rank-2 tensor from nested rows; all rows must share a length.
  static Tensor from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty() || rows.front().empty()) {
      throw ShapeError("from_rows needs at least one nonempty row");
    }
    const std::size_t cols = rows.front().size();
    std::vector<float> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  float operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  float& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  float operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  float& operator()(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  float operator()(std::size_t a, std::size_t b, std::size_t c,
                   std::size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  float& operator()(std::size_t a, std::size_t b, std::size_t c,
                    std::size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) {
        throw ShapeError("tensor dimensions must be positive, got " +
                         shape_str(shape_));
      }
    }
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Read-only view of one H x W plane inside a larger tensor.
struct PlaneView {
  std::span<const float> values;
  std::size_t height;
  std::size_t width;

  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

inline PlaneView plane(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("plane() expects rank 2, got " + shape_str(t.shape()));
  return {t.data(), t.dim(0), t.dim(1)};
}

/// Channel `c` of a [C x H x W] tensor.
inline PlaneView plane(const Tensor& t, std::size_t c) {
  if (t.rank() != 3) throw ShapeError("plane(c) expects rank 3, got " + shape_str(t.shape()));
  const std::size_t hw = t.dim(1) * t.dim(2);
  return {t.data().subspan(c * hw, hw), t.dim(1), t.dim(2)};
}

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

}  // namespace detail

inline bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](float v) { return std::isfinite(v); });
}

/// [m x k] * [k x n]. Each output accumulates over k in increasing order.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[p * n + j];
      ov[i * n + j] = acc;
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out = a;
  auto ov = out.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return out;
}

/// Adds a length-n vector to every row of an [m x n] matrix.
inline Tensor add_row_vector(const Tensor& a, const Tensor& row) {
  detail::require_rank(a, 2, "add_row_vector");
  if (row.size() != a.dim(1)) {
    throw ShapeError("add_row_vector: " + shape_str(row.shape()) + " vs row width of " +
                     shape_str(a.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(i, j) += row[j];
  return out;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor out = a;
  for (float& v : out.data()) v *= s;
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

inline float sigmoid(float x) {
  // Clamped so the result stays strictly inside (0, 1) even when 1/(1+e^-x)
  // rounds to an endpoint.
  constexpr float lo = std::numeric_limits<float>::min();
  const float hi = std::nextafter(1.0f, 0.0f);
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
  return std::clamp(static_cast<float>(s), lo, hi);
}

inline Tensor sigmoid_map(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) v = sigmoid(v);
  return out;
}

/// Row-wise softmax with max subtraction. Exponentials and the normalizer are
/// accumulated in double so each float row sums to 1 within a few ulp.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out({rows, cols});
  std::vector<double> e(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    float mx = x(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      e[j] = std::exp(static_cast<double>(x(i, j)) - mx);
      total += e[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = static_cast<float>(e[j] / total);
  }
  return out;
}

/// Same-padded 2-D cross-correlation (no kernel flip), stride 1.
/// input [Cin x H x W], kernel [Cout x Cin x k x k] with odd k, bias [Cout].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  detail::require_rank(input, 3, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " does not match input channels of " + shape_str(input.shape()));
  }
  if (kernel.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " +
                     shape_str(kernel.shape()));
  }
  if (bias.size() != cout) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                     std::to_string(cout) + " output channels");
  }
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  Tensor out({cout, h, w});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
      for (std::ptrdiff_t x = 0; x < ww; ++x) {
        float acc = bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(ky) - pad;
            if (sy < 0 || sy >= hh) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(kx) - pad;
              if (sx < 0 || sx >= ww) continue;
              acc += kernel(co, ci, ky, kx) *
                     input(ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          }
        }
        out(co, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
    }
  }
  return out;
}

/// [C x H x W] -> [C x 2H x 2W], each pixel replicated into a 2x2 block.
inline Tensor upsample_nearest_2x(const Tensor& x) {
  detail::require_rank(x, 3, "upsample_nearest_2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) out(ch, y, xx) = x(ch, y / 2, xx / 2);
  return out;
}

/// 2x2 max-pool with stride 2. Spatial dims must be even.
inline Tensor maxpool_2x2(const Tensor& x) {
  detail::require_rank(x, 3, "maxpool_2x2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw ShapeError("maxpool_2x2: odd spatial size " + shape_str(x.shape()));
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx)
        out(ch, y, xx) = std::max({x(ch, 2 * y, 2 * xx), x(ch, 2 * y, 2 * xx + 1),
                                   x(ch, 2 * y + 1, 2 * xx), x(ch, 2 * y + 1, 2 * xx + 1)});
  return out;
}

/// Bilinear interpolation at (x, y) from the four surrounding grid values,
/// weights (1 - |dx|)(1 - |dy|). Exact at integer coordinates. Coordinates must
/// lie in [0, W-1] x [0, H-1]; callers clamp.
inline double bilinear_sample(const PlaneView& map, double x, double y) {
  if (!(x >= 0.0 && x <= static_cast<double>(map.width - 1) && y >= 0.0 &&
        y <= static_cast<double>(map.height - 1))) {
    std::ostringstream os;
    os << "bilinear_sample: point (" << x << ", " << y << ") outside " << map.height << "x"
       << map.width << " map";
    throw RangeError(os.str());
  }
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, map.width - 1);
  const std::size_t y1 = std::min(y0 + 1, map.height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  return (1.0 - fy) * (1.0 - fx) * map.at(y0, x0) + (1.0 - fy) * fx * map.at(y0, x1) +
         fy * (1.0 - fx) * map.at(y1, x0) + fy * fx * map.at(y1, x1);
}

inline double bilinear_sample(const Tensor& map, double x, double y) {
  return bilinear_sample(plane(map), x, y);
}

/// Columns [begin, begin + count) of an [m x n] matrix.
inline Tensor slice_columns(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_rank(a, 2, "slice_columns");
  if (begin + count > a.dim(1) || count == 0) {
    throw ShapeError("slice_columns: range out of bounds for " + shape_str(a.shape()));
  }
  Tensor out({a.dim(0), count});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

inline Tensor concat_columns(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no parts");
  const std::size_t rows = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_columns");
    if (p.dim(0) != rows) throw ShapeError("concat_columns: row count mismatch");
    cols += p.dim(1);
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.dim(1); ++j) out(i, off + j) = p(i, j);
    off += p.dim(1);
  }
  return out;
}

/// Rows idx[0], idx[1], ... of an [m x n] matrix.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  detail::require_rank(a, 2, "gather_rows");
  Tensor out({idx.size(), a.dim(1)});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.dim(0)) throw ShapeError("gather_rows: row index out of range");
    for (std::size_t j = 0; j < a.dim(1); ++j) out(r, j) = a(idx[r], j);
  }
  return out;
}

/// Slice [index] of the leading axis, e.g. one head out of [heads x d x dk].
inline Tensor take_leading(const Tensor& a, std::size_t index) {
  if (a.rank() < 2 || index >= a.dim(0)) {
    throw ShapeError("take_leading: bad index for " + shape_str(a.shape()));
  }
  Shape rest(a.shape().begin() + 1, a.shape().end());
  const std::size_t n = shape_numel(rest);
  const auto src = a.data().subspan(index * n, n);
  return Tensor(std::move(rest), std::vector<float>(src.begin(), src.end()));
}

/// Named tensors, ordered by name. The unit of weight-file I/O.
using WeightMap = std::map<std::string, Tensor>;

inline const Tensor& require_tensor(const WeightMap& w, const std::string& name) {
  const auto it = w.find(name);
  if (it == w.end()) throw FormatError("weights: missing tensor '" + name + "'");
  return it->second;
}

}  // namespace medrx
