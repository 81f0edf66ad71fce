#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: full DP tables, exhaustive searches, dense sums
// and double-precision loops, so they share no code paths with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medrx/geometry.hpp"
#include "medrx/metrics.hpp"
#include "medrx/random.hpp"
#include "medrx/recognizer.hpp"
#include "medrx/tensor.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Strings

inline std::size_t edit_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) dp[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) dp[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                           dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return dp[a.size()][b.size()];
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  return edit_distance(std::u32string(a.begin(), a.end()), std::u32string(b.begin(), b.end()));
}

/// Ratcliff/Obershelp matched-character count by exhaustive longest-block
/// search: earliest block in `a`, then earliest in `b`, recursing on both sides.
inline std::size_t ratcliff_matches(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) return 0;
  std::size_t best = 0, bi = 0, bj = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t k = 0;
      while (i + k < a.size() && j + k < b.size() && a[i + k] == b[j + k]) ++k;
      if (k > best) {
        best = k;
        bi = i;
        bj = j;
      }
    }
  if (best == 0) return 0;
  return best + ratcliff_matches(a.substr(0, bi), b.substr(0, bj)) +
         ratcliff_matches(a.substr(bi + best), b.substr(bj + best));
}

/// Exact rational form of a similarity score num/den (scaled by 100).
struct Ratio {
  std::int64_t num, den;
  bool operator==(const Ratio& o) const { return num * o.den == o.num * den; }
  bool operator>(const Ratio& o) const { return num * o.den > o.num * den; }
  bool at_least(double threshold) const {
    // thresholds in tests are decimal with at most 2 fractional digits
    const auto t100 = static_cast<std::int64_t>(std::llround(threshold * 100));
    return num * 100 >= t100 * den;
  }
};

inline Ratio sl_ratio(const std::string& a, const std::string& b) {
  const auto m = static_cast<std::int64_t>(std::max(a.size(), b.size()));
  if (m == 0) return {100, 1};
  return {100 * (m - static_cast<std::int64_t>(edit_distance(a, b))), m};
}

inline Ratio sf_ratio(const std::string& a, const std::string& b) {
  const auto t = static_cast<std::int64_t>(a.size() + b.size());
  if (t == 0) return {100, 1};
  return {200 * static_cast<std::int64_t>(ratcliff_matches(a, b)), t};
}

struct Decision {
  std::optional<std::size_t> entry;
  std::string stage;  // "levenshtein", "fuzzy", "none"
};

/// Brute-force two-stage decision over already-normalized strings.
inline Decision decide(const std::string& q, const std::vector<std::string>& lex, double t_l,
                       double t_f) {
  if (q.empty()) return {std::nullopt, "none"};
  auto pick = [&](auto score) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < lex.size(); ++i) {
      const Ratio si = score(i), sb = score(best);
      if (si > sb) {
        best = i;
      } else if (si == sb) {
        const auto di = edit_distance(q, lex[i]), db = edit_distance(q, lex[best]);
        if (di < db || (di == db && lex[i] < lex[best])) best = i;
      }
    }
    return best;
  };
  const std::size_t by_l = pick([&](std::size_t i) { return sl_ratio(q, lex[i]); });
  if (sl_ratio(q, lex[by_l]).at_least(t_l)) return {by_l, "levenshtein"};
  const std::size_t by_f = pick([&](std::size_t i) { return sf_ratio(q, lex[i]); });
  if (sf_ratio(q, lex[by_f]).at_least(t_f)) return {by_f, "fuzzy"};
  return {std::nullopt, "none"};
}

// ---------------------------------------------------------------------------
// Bilinear sampling / RoI Align as a dense sum over every grid point

inline double dense_bilinear(const medrx::Tensor& map, std::size_t ch, double x, double y) {
  const std::size_t h = map.dim(1), w = map.dim(2);
  double acc = 0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(j)));
      const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(i)));
      acc += wx * wy * map(ch, i, j);
    }
  return acc;
}

/// Same sampling layout as the library: one point per bin centre, in pixel-
/// centre coordinates, clamped onto the grid.
inline std::vector<double> dense_roi_align(const medrx::Tensor& map, medrx::Box box,
                                           std::size_t s) {
  const double h = static_cast<double>(map.dim(1)), w = static_cast<double>(map.dim(2));
  box = medrx::clamp_box(box, w, h);
  std::vector<double> out;
  for (std::size_t ch = 0; ch < map.dim(0); ++ch)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        double y = box.y1 + (i + 0.5) * box.height() / s - 0.5;
        double x = box.x1 + (j + 0.5) * box.width() / s - 0.5;
        y = std::min(std::max(y, 0.0), h - 1);
        x = std::min(std::max(x, 0.0), w - 1);
        out.push_back(dense_bilinear(map, ch, x, y));
      }
  return out;
}

// ---------------------------------------------------------------------------
// Transformer layer in double precision, written straight from the formulas

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const medrx::Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
  return m;
}

inline Mat head_mat(const medrx::Tensor& w, std::size_t h) {
  Mat m(w.dim(1), std::vector<double>(w.dim(2)));
  for (std::size_t i = 0; i < w.dim(1); ++i)
    for (std::size_t j = 0; j < w.dim(2); ++j) m[i][j] = w(h, i, j);
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat layer(const Mat& z, const medrx::LayerWeights& w) {
  const std::size_t n = z.size(), d = z[0].size(), heads = w.attn.wq.dim(0);
  const std::size_t dk = w.attn.wq.dim(2);
  Mat concat(n, std::vector<double>());
  for (std::size_t h = 0; h < heads; ++h) {
    const Mat q = mul(z, head_mat(w.attn.wq, h));
    const Mat k = mul(z, head_mat(w.attn.wk, h));
    const Mat v = mul(z, head_mat(w.attn.wv, h));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300, sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t t = 0; t < dk; ++t) dot += q[i][t] * k[j][t];
        s[j] = dot / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, s[j]);
      }
      for (auto& x : s) sum += (x = std::exp(x - mx));
      for (std::size_t t = 0; t < dk; ++t) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / sum * v[j][t];
        concat[i].push_back(acc);
      }
    }
  }
  const Mat mha = mul(concat, to_mat(w.attn.merge));
  Mat a(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) a[i][j] = z[i][j] + mha[i][j];
  Mat hidden = mul(a, to_mat(w.ffn.w1));
  for (auto& row : hidden)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::max(0.0, row[j] + w.ffn.b1[j]);
  const Mat f = mul(hidden, to_mat(w.ffn.w2));
  Mat out(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i][j] = a[i][j] + f[i][j] + w.ffn.b2[j];
  return out;
}

inline double max_abs_diff(const medrx::Tensor& t, const Mat& m) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j)
      worst = std::max(worst, std::abs(static_cast<double>(t(i, j)) - m[i][j]));
  return worst;
}

// ---------------------------------------------------------------------------
// Average precision by explicit PR-curve evaluation (box IoU, no area ranges)

struct Scene {
  std::vector<std::vector<std::pair<double, medrx::Box>>> detections;  // per image
  std::vector<std::vector<medrx::Box>> ground_truth;
};

inline double average_precision(const Scene& s, double thr) {
  struct D {
    double score;
    std::size_t image, index;
    medrx::Box box;
  };
  std::vector<D> all;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    for (std::size_t d = 0; d < s.detections[i].size(); ++d)
      all.push_back({s.detections[i][d].first, i, d, s.detections[i][d].second});
    positives += s.ground_truth[i].size();
  }
  // stated order: score descending, then input order (image, index)
  std::sort(all.begin(), all.end(), [](const D& a, const D& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  if (positives == 0) return all.empty() ? 100.0 : 0.0;
  std::vector<std::vector<bool>> used(s.ground_truth.size());
  for (std::size_t i = 0; i < used.size(); ++i) used[i].assign(s.ground_truth[i].size(), false);
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& gts = s.ground_truth[all[k].image];
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[all[k].image][g]) continue;
      const double v = medrx::iou(all[k].box, gts[g]);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[all[k].image][static_cast<std::size_t>(best)] = true;
      ++tp;
    }
    prec.push_back(double(tp) / double(k + 1));
    rec.push_back(double(tp) / double(positives));
  }
  // interpolated precision at rank k: max precision at any rank >= k
  double ap = 0, prev = 0;
  for (std::size_t k = 0; k < prec.size(); ++k) {
    double p = 0;
    for (std::size_t j = k; j < prec.size(); ++j) p = std::max(p, prec[j]);
    ap += (rec[k] - prev) * p;
    prev = rec[k];
  }
  return 100.0 * ap;
}

inline std::vector<medrx::ImageEval> to_image_evals(const Scene& s) {
  std::vector<medrx::ImageEval> out(s.detections.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (const auto& [score, b] : s.detections[i]) out[i].detections.push_back({score, b, {}});
    for (const auto& b : s.ground_truth[i]) out[i].ground_truth.push_back({b, {}});
  }
  return out;
}

/// Up to 5 detections and 3 ground truths on small integer grids, so IoU
/// ties and perfect overlaps show up often.
inline Scene random_scene(medrx::Rng& rng) {
  Scene s;
  const std::size_t images = 1 + rng.below(2);
  auto rand_box = [&] {
    const double x = double(rng.below(6)), y = double(rng.below(6));
    return medrx::Box{x, y, x + 2 + double(rng.below(4)), y + 2 + double(rng.below(4))};
  };
  std::size_t det_budget = 1 + rng.below(5), gt_budget = 1 + rng.below(3);
  s.detections.resize(images);
  s.ground_truth.resize(images);
  for (std::size_t g = 0; g < gt_budget; ++g) s.ground_truth[rng.below(images)].push_back(rand_box());
  for (std::size_t d = 0; d < det_budget; ++d) {
    const std::size_t img = rng.below(images);
    medrx::Box b = rand_box();
    // half the time, copy or jitter a ground truth to create true positives
    if (!s.ground_truth[img].empty() && rng.bernoulli(0.5)) {
      b = s.ground_truth[img][rng.below(s.ground_truth[img].size())];
      if (rng.bernoulli(0.5)) b.x2 += 1;
    }
    s.detections[img].push_back({double(rng.below(4)) / 4.0 + 0.1, b});  // coarse: score ties
  }
  return s;
}

// ---------------------------------------------------------------------------
// Random strings

inline std::string random_word(medrx::Rng& rng, std::size_t min_len, std::size_t max_len,
                               const std::string& alphabet = "abcdefghijklmnopqrstuvwxyz") {
  const std::size_t n = min_len + rng.below(max_len - min_len + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
  return s;
}

/// Lexicon with pairwise edit distance >= min_dist and every entry of
/// length >= min_len, built by rejection sampling.
inline std::vector<std::string> separated_lexicon(medrx::Rng& rng, std::size_t count,
                                                  std::size_t min_dist, std::size_t min_len,
                                                  std::size_t max_len) {
  std::vector<std::string> out;
  while (out.size() < count) {
    const std::string w = random_word(rng, min_len, max_len);
    const bool ok = std::all_of(out.begin(), out.end(),
                                [&](const std::string& e) { return edit_distance(w, e) >= min_dist; });
    if (ok) out.push_back(w);
  }
  return out;
}

/// One random substitution, insertion or deletion.
inline std::string one_edit(const std::string& w, medrx::Rng& rng,
                            const std::string& alphabet = "abcdefghijklmnopqrstuvwxyz") {
  std::string s = w;
  const auto kind = rng.below(3);
  if (kind == 0) {
    const std::size_t i = rng.below(s.size());
    char c;
    do c = alphabet[rng.below(alphabet.size())];
    while (c == s[i]);
    s[i] = c;
  } else if (kind == 1) {
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size() + 1)),
             alphabet[rng.below(alphabet.size())]);
  } else {
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size())));
  }
  return s;
}

}  // namespace oracle
