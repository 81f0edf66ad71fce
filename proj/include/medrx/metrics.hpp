#pragma once

// Character error rate and COCO-style average precision.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/geometry.hpp"
#include "medrx/matcher.hpp"
#include "medrx/utf8.hpp"

namespace medrx {

// ---------------------------------------------------------------------------
// CER

/// levenshtein(ref, hyp) / |ref|, over Unicode scalar values.
inline double cer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = utf8_decode(reference);
  if (ref.empty()) throw UndefinedReferenceError("cer: empty reference");
  return static_cast<double>(levenshtein(ref, utf8_decode(hypothesis))) /
         static_cast<double>(ref.size());
}

struct TextPair {
  std::string reference;
  std::string hypothesis;
};

struct CerTotals {
  std::size_t pairs = 0;
  std::size_t reference_chars = 0;
  std::size_t edits = 0;

  double rate() const {
    return reference_chars ? static_cast<double>(edits) / static_cast<double>(reference_chars)
                           : 0.0;
  }
};

inline CerTotals cer_totals(const std::vector<TextPair>& pairs) {
  CerTotals t;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto ref = utf8_decode(pairs[i].reference);
    if (ref.empty()) {
      throw UndefinedReferenceError("corpus_cer: empty reference at index " + std::to_string(i));
    }
    t.edits += levenshtein(ref, utf8_decode(pairs[i].hypothesis));
    t.reference_chars += ref.size();
    ++t.pairs;
  }
  return t;
}

/// Micro average: total edits over total reference characters.
inline double corpus_cer(const std::vector<TextPair>& pairs) { return cer_totals(pairs).rate(); }

struct CerReport {
  std::string category;
  double cer_before = 0;
  double cer_after = 0;
  std::size_t pairs = 0;
  std::size_t reference_chars = 0;
  std::size_t edits_before = 0;
  std::size_t edits_after = 0;

  double improvement() const { return cer_before - cer_after; }
};

/// Both lists must pair the same references in the same order.
inline CerReport compare_before_after(const std::vector<TextPair>& before,
                                      const std::vector<TextPair>& after,
                                      std::string category) {
  if (before.size() != after.size()) {
    throw AlignmentError("compare_before_after: " + std::to_string(before.size()) +
                         " pairs before vs " + std::to_string(after.size()) + " after");
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].reference != after[i].reference) {
      throw AlignmentError("compare_before_after: references differ at index " +
                           std::to_string(i));
    }
  }
  const CerTotals b = cer_totals(before);
  const CerTotals a = cer_totals(after);
  return {std::move(category), b.rate(), a.rate(), b.pairs, b.reference_chars, b.edits,
          a.edits};
}

// ---------------------------------------------------------------------------
// Average precision

enum class ApTask { bbox, segm };

inline const char* task_name(ApTask t) { return t == ApTask::bbox ? "bbox" : "segm"; }

struct ScoredInstance {
  double score = 0;
  Box box;
  BinaryMask mask;  // image-sized; only read for segm
};

struct GroundTruthInstance {
  Box box;
  BinaryMask mask;
};

struct ImageEval {
  std::vector<ScoredInstance> detections;
  std::vector<GroundTruthInstance> ground_truth;
};

/// Object-area interval [lo, hi] in square pixels.
struct AreaRange {
  double lo = 0;
  double hi = 1e10;

  static AreaRange all() { return {0.0, 1e10}; }
  static AreaRange medium() { return {32.0 * 32.0, 96.0 * 96.0}; }
  /// Strictly above 96^2.
  static AreaRange large() { return {std::nextafter(96.0 * 96.0, 1e10), 1e10}; }

  bool contains(double a) const { return a >= lo && a <= hi; }
};

namespace detail {

inline double instance_area(const Box& box, const BinaryMask& mask, ApTask task) {
  return task == ApTask::bbox ? box.area() : static_cast<double>(mask.area());
}

inline double instance_iou(const ScoredInstance& d, const GroundTruthInstance& g, ApTask task) {
  return task == ApTask::bbox ? iou(d.box, g.box) : iou(d.mask, g.mask);
}

}  // namespace detail

/// Outcome of evaluating one IoU threshold / area range.
struct ApCurve {
  std::size_t positives = 0;      // non-ignored ground truths
  std::vector<bool> true_positive;  // per counted detection, in rank order
};

/// Sorts detections globally by descending score (input order breaks ties) and
/// greedily matches each to the highest-IoU unmatched ground truth of its
/// image with IoU >= threshold. Ground truths outside `range` are ignored, as
/// are detections matched to them and unmatched detections outside `range`.
inline ApCurve match_detections(const std::vector<ImageEval>& images, double iou_threshold,
                                ApTask task, AreaRange range) {
  struct Ref {
    double score;
    std::size_t image;
    std::size_t det;
  };
  std::vector<Ref> order;
  ApCurve curve;
  std::vector<std::vector<bool>> ignored(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t d = 0; d < images[i].detections.size(); ++d)
      order.push_back({images[i].detections[d].score, i, d});
    for (const auto& g : images[i].ground_truth) {
      const bool ign = !range.contains(detail::instance_area(g.box, g.mask, task));
      ignored[i].push_back(ign);
      if (!ign) ++curve.positives;
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    taken[i].assign(images[i].ground_truth.size(), false);

  for (const auto& r : order) {
    const auto& img = images[r.image];
    const auto& det = img.detections[r.det];
    // Prefer non-ignored ground truth; fall back to ignored ones.
    std::optional<std::size_t> best;
    double best_iou = 0;
    bool best_ignored = true;
    for (std::size_t g = 0; g < img.ground_truth.size(); ++g) {
      if (taken[r.image][g]) continue;
      const double v = detail::instance_iou(det, img.ground_truth[g], task);
      if (v < iou_threshold) continue;
      const bool ign = ignored[r.image][g];
      const bool better = !best || (best_ignored && !ign) ||
                          (best_ignored == ign && v > best_iou);
      if (better) {
        best = g;
        best_iou = v;
        best_ignored = ign;
      }
    }
    if (best) {
      taken[r.image][*best] = true;
      if (!best_ignored) curve.true_positive.push_back(true);
    } else if (range.contains(detail::instance_area(det.box, det.mask, task))) {
      curve.true_positive.push_back(false);
    }
  }
  return curve;
}

/// Area under the precision/recall curve with the precision envelope made
/// monotone (all-point interpolation), on a 0-100 scale. No ground truth:
/// 100 without detections, 0 with.
inline double area_under_pr(const ApCurve& c) {
  if (c.positives == 0) return c.true_positive.empty() ? 100.0 : 0.0;
  const std::size_t n = c.true_positive.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += c.true_positive[k] ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(c.positives);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0, prev_recall = 0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return 100.0 * ap;
}

inline double average_precision(const std::vector<ImageEval>& images, double iou_threshold,
                                ApTask task = ApTask::bbox,
                                AreaRange range = AreaRange::all()) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw ConfigError("average_precision: iou_threshold must lie in (0, 1)");
  }
  return area_under_pr(match_detections(images, iou_threshold, task, range));
}

/// 0.50, 0.55, ..., 0.95.
inline std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + 0.05 * static_cast<double>(i);
  return t;
}

struct ApReport {
  ApTask task = ApTask::bbox;
  double ap = 0;
  double ap50 = 0;
  double ap75 = 0;
  std::optional<double> ap_m;  // null when no ground truth falls in the range
  std::optional<double> ap_l;

  friend bool operator==(const ApReport&, const ApReport&) = default;
};

inline std::size_t count_in_range(const std::vector<ImageEval>& images, ApTask task,
                                  AreaRange range) {
  std::size_t n = 0;
  for (const auto& img : images)
    for (const auto& g : img.ground_truth)
      if (range.contains(detail::instance_area(g.box, g.mask, task))) ++n;
  return n;
}

inline ApReport ap_suite(const std::vector<ImageEval>& images, ApTask task) {
  auto mean_ap = [&](AreaRange range) {
    double total = 0;
    for (double t : coco_iou_thresholds()) total += average_precision(images, t, task, range);
    return total / static_cast<double>(coco_iou_thresholds().size());
  };
  ApReport r;
  r.task = task;
  r.ap = mean_ap(AreaRange::all());
  r.ap50 = average_precision(images, 0.5, task);
  r.ap75 = average_precision(images, 0.75, task);
  if (count_in_range(images, task, AreaRange::medium())) r.ap_m = mean_ap(AreaRange::medium());
  if (count_in_range(images, task, AreaRange::large())) r.ap_l = mean_ap(AreaRange::large());
  return r;
}

}  // namespace medrx
