#pragma once

// Toy instance-segmentation stage: residual backbone -> FPN -> per-level RPN
// -> RoI Align -> objectness / box / mask heads -> NMS.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/geometry.hpp"
#include "medrx/random.hpp"
#include "medrx/tensor.hpp"

namespace medrx {

struct DetectorConfig {
  std::size_t channels = 8;
  std::size_t roi_size = 7;  // RoI Align output and mask resolution
  std::size_t rpn_kernel = 3;
  double proposal_threshold = 0.7;
  double nms_iou = 0.5;
  double detection_threshold = 0.5;
  std::size_t max_proposals = 1000;

  void validate() const {
    if (channels == 0) throw ConfigError("detector: channels must be positive");
    if (roi_size == 0) throw ConfigError("detector: roi_size must be at least 1");
    if (rpn_kernel % 2 == 0) throw ConfigError("detector: rpn_kernel must be odd");
    if (!(proposal_threshold >= 0.0 && proposal_threshold <= 1.0))
      throw ConfigError("detector: proposal_threshold must lie in [0, 1]");
    if (!(nms_iou > 0.0 && nms_iou < 1.0))
      throw ConfigError("detector: nms_iou must lie in (0, 1)");
    if (!(detection_threshold >= 0.0 && detection_threshold <= 1.0))
      throw ConfigError("detector: detection_threshold must lie in [0, 1]");
    if (max_proposals == 0) throw ConfigError("detector: max_proposals must be positive");
  }
};

/// Pyramid levels l = 2, 3, 4 have strides 2, 4, 8.
inline constexpr int kFirstLevel = 2;
inline constexpr int kLevelCount = 3;

inline double level_stride(int level) { return std::ldexp(1.0, level - 1); }

struct PyramidLevel {
  int index;
  Tensor features;  // [C x H_l x W_l]
};

/// Ordered finest first; each level is half the size of the previous one.
struct PyramidLevels {
  std::vector<PyramidLevel> levels;

  void validate() const {
    if (levels.empty()) throw ShapeError("pyramid: no levels");
    const auto& first = levels.front().features;
    if (first.rank() != 3) throw ShapeError("pyramid: levels must be rank-3");
    for (std::size_t i = 1; i < levels.size(); ++i) {
      const auto& fine = levels[i - 1].features;
      const auto& coarse = levels[i].features;
      if (coarse.rank() != 3 || coarse.dim(0) != first.dim(0)) {
        throw ShapeError("pyramid: channel count differs at level " +
                         std::to_string(levels[i].index));
      }
      if (fine.dim(1) != 2 * coarse.dim(1) || fine.dim(2) != 2 * coarse.dim(2)) {
        throw ShapeError("pyramid: level " + std::to_string(levels[i].index) + " " +
                         shape_str(coarse.shape()) + " is not half of " +
                         shape_str(fine.shape()));
      }
      if (levels[i].index != levels[i - 1].index + 1) {
        throw ShapeError("pyramid: level indices must be consecutive");
      }
    }
  }
};

struct ConvLayer {
  Tensor weight;  // [Cout x Cin x k x k]
  Tensor bias;    // [Cout]

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias); }

  static ConvLayer zeros(std::size_t cout, std::size_t cin, std::size_t k) {
    return {Tensor({cout, cin, k, k}), Tensor({cout})};
  }
};

struct ResidualStage {
  ConvLayer conv1;
  ConvLayer conv2;
};

struct RpnHead {
  ConvLayer score;  // 1 output channel
  ConvLayer bbox;   // 4 output channels: dx, dy, dw, dh
};

struct DetectorWeights {
  std::vector<ResidualStage> stages;  // one per pyramid level
  std::vector<Tensor> fpn_lateral;    // [C x C x 1 x 1] per level, finest first
  std::vector<RpnHead> rpn;           // per level, finest first
  ConvLayer objectness;               // [1 x C x 1 x 1]
  ConvLayer box;                      // [4 x C x 1 x 1]
  ConvLayer mask;                     // [1 x C x 3 x 3]

  std::size_t channels() const { return objectness.weight.dim(1); }

  static DetectorWeights zeros(const DetectorConfig& cfg) {
    const std::size_t c = cfg.channels;
    DetectorWeights w;
    for (int i = 0; i < kLevelCount; ++i) {
      w.stages.push_back({ConvLayer::zeros(c, c, 3), ConvLayer::zeros(c, c, 3)});
      w.fpn_lateral.emplace_back(Shape{c, c, 1, 1});
      w.rpn.push_back({ConvLayer::zeros(1, c, cfg.rpn_kernel),
                       ConvLayer::zeros(4, c, cfg.rpn_kernel)});
    }
    w.objectness = ConvLayer::zeros(1, c, 1);
    w.box = ConvLayer::zeros(4, c, 1);
    w.mask = ConvLayer::zeros(1, c, 3);
    return w;
  }

  /// Every parameter drawn uniformly from [-scale, scale].
  static DetectorWeights random(const DetectorConfig& cfg, Rng& rng, float scale = 0.02f) {
    DetectorWeights w = zeros(cfg);
    w.for_each([&](const std::string&, Tensor& t) {
      for (float& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
    });
    return w;
  }

  /// Visits every tensor with its weight-file name, in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string p = "det.backbone.stage" + std::to_string(i + 1);
      fn(p + ".conv1.weight", stages[i].conv1.weight);
      fn(p + ".conv1.bias", stages[i].conv1.bias);
      fn(p + ".conv2.weight", stages[i].conv2.weight);
      fn(p + ".conv2.bias", stages[i].conv2.bias);
    }
    for (std::size_t i = 0; i < fpn_lateral.size(); ++i) {
      fn("det.fpn.p" + std::to_string(kFirstLevel + static_cast<int>(i)) + ".lateral.weight",
         fpn_lateral[i]);
    }
    for (std::size_t i = 0; i < rpn.size(); ++i) {
      const std::string p = "det.rpn.p" + std::to_string(kFirstLevel + static_cast<int>(i));
      fn(p + ".score.weight", rpn[i].score.weight);
      fn(p + ".score.bias", rpn[i].score.bias);
      fn(p + ".bbox.weight", rpn[i].bbox.weight);
      fn(p + ".bbox.bias", rpn[i].bbox.bias);
    }
    fn("det.head.objectness.weight", objectness.weight);
    fn("det.head.objectness.bias", objectness.bias);
    fn("det.head.bbox.weight", box.weight);
    fn("det.head.bbox.bias", box.bias);
    fn("det.head.mask.weight", mask.weight);
    fn("det.head.mask.bias", mask.bias);
  }

  void to_weight_map(WeightMap& out) const {
    auto copy = *this;
    copy.for_each([&](const std::string& name, Tensor& t) { out[name] = t; });
  }

  /// Reads tensors named as in for_each; shapes are checked against `cfg`.
  static DetectorWeights from_weight_map(const WeightMap& in, const DetectorConfig& cfg) {
    DetectorWeights w = zeros(cfg);
    w.for_each([&](const std::string& name, Tensor& t) {
      const Tensor& src = require_tensor(in, name);
      if (src.shape() != t.shape()) {
        throw ShapeError("weights: tensor '" + name + "' has shape " +
                         shape_str(src.shape()) + ", expected " + shape_str(t.shape()));
      }
      t = src;
    });
    return w;
  }
};

// ---------------------------------------------------------------------------
// Backbone and FPN

/// Three residual stages, y = conv2(conv1(x)) + x followed by a 2x2 max-pool.
/// The grayscale input is replicated across the C channels before stage 1.
inline PyramidLevels toy_backbone(const Tensor& image, const DetectorWeights& weights) {
  detail::require_rank(image, 3, "toy_backbone");
  if (image.dim(0) != 1) throw ShapeError("toy_backbone: expected a 1-channel image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h % 8 || w % 8) {
    throw ShapeError("toy_backbone: image " + shape_str(image.shape()) +
                     " must have height and width divisible by 8");
  }
  const std::size_t c = weights.channels();
  Tensor x({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    std::copy(image.data().begin(), image.data().end(), x.data().begin() + ch * h * w);

  PyramidLevels out;
  for (std::size_t s = 0; s < weights.stages.size(); ++s) {
    const auto& stage = weights.stages[s];
    x = maxpool_2x2(add(stage.conv2(stage.conv1(x)), x));
    out.levels.push_back({kFirstLevel + static_cast<int>(s), x});
  }
  return out;
}

/// P_top = W_top * C_top; P_l = W_l * C_l + upsample(P_{l+1}) below it.
inline PyramidLevels fpn_merge(const PyramidLevels& c, std::span<const Tensor> laterals) {
  c.validate();
  if (laterals.size() != c.levels.size()) {
    throw ShapeError("fpn_merge: " + std::to_string(laterals.size()) + " lateral kernels for " +
                     std::to_string(c.levels.size()) + " levels");
  }
  const std::size_t ch = c.levels.front().features.dim(0);
  PyramidLevels p;
  p.levels.resize(c.levels.size());
  const Tensor no_bias({laterals.front().dim(0)});
  for (std::size_t i = c.levels.size(); i-- > 0;) {
    if (laterals[i].rank() != 4 || laterals[i].dim(1) != ch) {
      throw ShapeError("fpn_merge: lateral kernel " + shape_str(laterals[i].shape()) +
                       " does not match " + std::to_string(ch) + " channels");
    }
    Tensor lateral = conv2d(c.levels[i].features, laterals[i], no_bias);
    if (i + 1 < c.levels.size()) {
      lateral = add(lateral, upsample_nearest_2x(p.levels[i + 1].features));
    }
    p.levels[i] = {c.levels[i].index, std::move(lateral)};
  }
  return p;
}

inline PyramidLevels fpn_merge(const PyramidLevels& c, const DetectorWeights& weights) {
  return fpn_merge(c, std::span<const Tensor>(weights.fpn_lateral));
}

// ---------------------------------------------------------------------------
// Region proposals

using BoxDeltas = std::array<double, 4>;  // dx, dy, dw, dh

/// Bound on dw/dh before exponentiation, as in common Mask R-CNN code.
inline const double kMaxLogScale = std::log(1000.0 / 16.0);

/// Shift the box center by (dx*w, dy*h) and scale the size by (e^dw, e^dh).
inline Box apply_deltas(const Box& b, const BoxDeltas& d) {
  const double w = b.width(), h = b.height();
  const double cx = b.x1 + 0.5 * w + d[0] * w;
  const double cy = b.y1 + 0.5 * h + d[1] * h;
  const double nw = w * std::exp(std::min(d[2], kMaxLogScale));
  const double nh = h * std::exp(std::min(d[3], kMaxLogScale));
  return {cx - 0.5 * nw, cy - 0.5 * nh, cx + 0.5 * nw, cy + 0.5 * nh};
}

struct AnchorOutput {
  int level;
  Box anchor;       // image pixels
  double score;     // objectness in (0, 1)
  BoxDeltas deltas;
  Box box;          // anchor shifted by deltas, not yet clamped
};

/// One square anchor per cell, side 4 x stride, centered on the cell.
inline Box anchor_box(int level, std::size_t row, std::size_t col) {
  const double stride = level_stride(level);
  const double cx = (static_cast<double>(col) + 0.5) * stride;
  const double cy = (static_cast<double>(row) + 0.5) * stride;
  const double half = 2.0 * stride;
  return {cx - half, cy - half, cx + half, cy + half};
}

/// Scores and regressions for every anchor, level by level in row-major order.
inline std::vector<AnchorOutput> rpn_forward(const PyramidLevels& p,
                                             const DetectorWeights& weights) {
  p.validate();
  if (weights.rpn.size() != p.levels.size()) {
    throw ShapeError("rpn_forward: head count does not match pyramid levels");
  }
  std::vector<AnchorOutput> out;
  for (std::size_t li = 0; li < p.levels.size(); ++li) {
    const auto& level = p.levels[li];
    const Tensor score = sigmoid_map(weights.rpn[li].score(level.features));
    const Tensor reg = weights.rpn[li].bbox(level.features);
    const std::size_t h = level.features.dim(1), w = level.features.dim(2);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        AnchorOutput a;
        a.level = level.index;
        a.anchor = anchor_box(level.index, y, x);
        a.score = score(0, y, x);
        a.deltas = {reg(0, y, x), reg(1, y, x), reg(2, y, x), reg(3, y, x)};
        a.box = apply_deltas(a.anchor, a.deltas);
        out.push_back(a);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// RoI Align

/// Samples an S x S grid from `level` [C x H x W] over `box`, given in
/// continuous feature-map coordinates. One bilinear sample per bin at the bin
/// center; sample positions are clamped onto the grid, never rounded.
inline Tensor roi_align(const Tensor& level, const Box& box, std::size_t out_size) {
  detail::require_rank(level, 3, "roi_align");
  if (out_size == 0) throw ShapeError("roi_align: output size must be at least 1");
  const std::size_t c = level.dim(0), h = level.dim(1), w = level.dim(2);
  const Box b = clamp_box(box, static_cast<double>(w), static_cast<double>(h));
  if (!b.valid()) throw DegenerateBoxError("roi_align: box has zero width or height");
  const double bin_w = b.width() / static_cast<double>(out_size);
  const double bin_h = b.height() / static_cast<double>(out_size);
  const double max_x = static_cast<double>(w - 1), max_y = static_cast<double>(h - 1);
  Tensor out({c, out_size, out_size});
  for (std::size_t i = 0; i < out_size; ++i) {
    const double y = std::clamp(b.y1 + (static_cast<double>(i) + 0.5) * bin_h - 0.5, 0.0, max_y);
    for (std::size_t j = 0; j < out_size; ++j) {
      const double x =
          std::clamp(b.x1 + (static_cast<double>(j) + 0.5) * bin_w - 0.5, 0.0, max_x);
      for (std::size_t ch = 0; ch < c; ++ch) {
        out(ch, i, j) = static_cast<float>(bilinear_sample(plane(level, ch), x, y));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heads

struct HeadOutput {
  double score;          // sigmoid of the spatially averaged objectness map
  BoxDeltas deltas;      // spatial average of the box regression maps
  Tensor mask_prob;      // [S x S]
};

struct Detection {
  double score = 0;
  Box box;
  BinaryMask mask;  // roi_size x roi_size grid aligned to `box`

  /// Rasterizes the box-aligned mask into an image-sized mask.
  BinaryMask paste(std::size_t image_h, std::size_t image_w) const {
    BinaryMask m(image_h, image_w);
    if (mask.empty() || !box.valid()) return m;
    const double sy = static_cast<double>(mask.height) / box.height();
    const double sx = static_cast<double>(mask.width) / box.width();
    for (std::size_t y = 0; y < image_h; ++y) {
      const double cy = static_cast<double>(y) + 0.5;
      if (cy < box.y1 || cy >= box.y2) continue;
      const auto my = std::min(mask.height - 1, static_cast<std::size_t>((cy - box.y1) * sy));
      for (std::size_t x = 0; x < image_w; ++x) {
        const double cx = static_cast<double>(x) + 0.5;
        if (cx < box.x1 || cx >= box.x2) continue;
        const auto mx = std::min(mask.width - 1, static_cast<std::size_t>((cx - box.x1) * sx));
        if (mask.at(my, mx)) m.set(y, x);
      }
    }
    return m;
  }
};

inline HeadOutput detect_heads(const Tensor& roi, const DetectorWeights& weights) {
  detail::require_rank(roi, 3, "detect_heads");
  const std::size_t s = roi.dim(1);
  const double cells = static_cast<double>(roi.dim(1) * roi.dim(2));
  auto channel_mean = [&](const Tensor& t, std::size_t ch) {
    double acc = 0.0;
    for (float v : plane(t, ch).values) acc += v;
    return acc / cells;
  };
  HeadOutput out;
  const Tensor obj = weights.objectness(roi);
  out.score = sigmoid(static_cast<float>(channel_mean(obj, 0)));
  const Tensor reg = weights.box(roi);
  for (std::size_t k = 0; k < 4; ++k) out.deltas[k] = channel_mean(reg, k);
  out.mask_prob = sigmoid_map(weights.mask(roi)).reshaped({s, roi.dim(2)});
  return out;
}

/// Strict > 0.5 binarization of a mask probability map.
inline BinaryMask binarize(const Tensor& prob) {
  detail::require_rank(prob, 2, "binarize");
  BinaryMask m(prob.dim(0), prob.dim(1));
  for (std::size_t i = 0; i < prob.size(); ++i) m.bits[i] = prob[i] > 0.5f ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// NMS and composition

/// Greedy suppression in descending score; equal scores keep the box with the
/// smaller (y1, x1) first. Works on anything exposing `score` and `box`.
template <typename T>
std::vector<T> nms(std::vector<T> items, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw ConfigError("nms: iou_threshold must lie in (0, 1)");
  }
  std::stable_sort(items.begin(), items.end(), [](const T& a, const T& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
    return a.box.x1 < b.box.x1;
  });
  std::vector<T> kept;
  for (auto& cand : items) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const T& k) {
      return iou(k.box, cand.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(cand));
  }
  return kept;
}

/// Full detector pass over a [1 x H x W] image. Detections come back ordered
/// top-to-bottom, then left-to-right.
inline std::vector<Detection> segment_image(const Tensor& image, const DetectorWeights& weights,
                                            const DetectorConfig& cfg) {
  cfg.validate();
  if (weights.channels() != cfg.channels) {
    throw ShapeError("segment_image: weights have " + std::to_string(weights.channels()) +
                     " channels, config expects " + std::to_string(cfg.channels));
  }
  const double img_h = static_cast<double>(image.dim(1));
  const double img_w = static_cast<double>(image.dim(2));
  const PyramidLevels pyramid = fpn_merge(toy_backbone(image, weights), weights);

  struct Proposal {
    double score;
    Box box;
    int level;
  };
  std::vector<Proposal> proposals;
  for (const auto& a : rpn_forward(pyramid, weights)) {
    if (a.score < cfg.proposal_threshold) continue;
    const Box b = clamp_box(a.box, img_w, img_h);
    if (!b.valid()) continue;
    proposals.push_back({a.score, b, a.level});
  }
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  if (proposals.size() > cfg.max_proposals) proposals.resize(cfg.max_proposals);
  proposals = nms(std::move(proposals), cfg.nms_iou);

  std::vector<Detection> dets;
  for (const auto& p : proposals) {
    const auto& level = pyramid.levels[static_cast<std::size_t>(p.level - kFirstLevel)];
    const double stride = level_stride(p.level);
    const Box feat{p.box.x1 / stride, p.box.y1 / stride, p.box.x2 / stride, p.box.y2 / stride};
    Tensor roi;
    try {
      roi = roi_align(level.features, feat, cfg.roi_size);
    } catch (const DegenerateBoxError&) {
      continue;  // box collapsed after clamping to the feature map
    }
    HeadOutput head = detect_heads(roi, weights);
    if (head.score < cfg.detection_threshold) continue;
    const Box refined = clamp_box(apply_deltas(p.box, head.deltas), img_w, img_h);
    if (!refined.valid()) continue;
    dets.push_back({head.score, refined, binarize(head.mask_prob)});
  }
  dets = nms(std::move(dets), cfg.nms_iou);
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
    return a.box.x1 < b.box.x1;
  });
  return dets;
}

}  // namespace medrx
