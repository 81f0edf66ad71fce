#pragma once

// Hybrid lexicon matching: a Levenshtein-similarity gate, then a
// Ratcliff/Obershelp ratio fallback, then "no".

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/utf8.hpp"
#include "medrx/vocab.hpp"

namespace medrx {

// ---------------------------------------------------------------------------
// Distances and similarities

/// Unit-cost insert/delete/substitute edit distance, two-row DP.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_decode(a), utf8_decode(b));
}

/// (1 - D / max(|a|, |b|)) * 100, evaluated as 100 (max - D) / max so exact
/// values such as 70 or 80 are represented exactly. Two empty strings score 100.
inline double similarity_l(std::size_t distance, std::size_t len_a, std::size_t len_b) {
  const std::size_t longest = std::max(len_a, len_b);
  if (longest == 0) return 100.0;
  return 100.0 * static_cast<double>(longest - distance) / static_cast<double>(longest);
}

inline double similarity_l(std::u32string_view a, std::u32string_view b) {
  return similarity_l(levenshtein(a, b), a.size(), b.size());
}

inline double similarity_l(std::string_view a, std::string_view b) {
  return similarity_l(utf8_decode(a), utf8_decode(b));
}

struct MatchingBlock {
  std::size_t a;  // start in first string
  std::size_t b;  // start in second string
  std::size_t size;
};

/// Longest common substring of a[alo, ahi) and b[blo, bhi). Among maximal
/// blocks, the one starting earliest in `a`, then earliest in `b`.
inline MatchingBlock longest_match(std::u32string_view a, std::size_t alo, std::size_t ahi,
                                   std::u32string_view b, std::size_t blo, std::size_t bhi) {
  MatchingBlock best{alo, blo, 0};
  std::vector<std::size_t> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
  for (std::size_t i = alo; i < ahi; ++i) {
    for (std::size_t j = blo; j < bhi; ++j) {
      const std::size_t k = j - blo + 1;
      cur[k] = a[i] == b[j] ? prev[k - 1] + 1 : 0;
      if (cur[k] > best.size) best = {i + 1 - cur[k], j + 1 - cur[k], cur[k]};
    }
    std::swap(prev, cur);
  }
  return best;
}

/// Ratcliff/Obershelp decomposition: take the longest block, recurse on the
/// pieces to its left and to its right. Blocks are returned in order.
inline std::vector<MatchingBlock> matching_blocks(std::u32string_view a, std::u32string_view b) {
  std::vector<MatchingBlock> blocks;
  struct Range {
    std::size_t alo, ahi, blo, bhi;
  };
  std::vector<Range> stack{{0, a.size(), 0, b.size()}};
  while (!stack.empty()) {
    const Range r = stack.back();
    stack.pop_back();
    if (r.alo >= r.ahi || r.blo >= r.bhi) continue;
    const MatchingBlock m = longest_match(a, r.alo, r.ahi, b, r.blo, r.bhi);
    if (m.size == 0) continue;
    blocks.push_back(m);
    stack.push_back({r.alo, m.a, r.blo, m.b});
    stack.push_back({m.a + m.size, r.ahi, m.b + m.size, r.bhi});
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const MatchingBlock& x, const MatchingBlock& y) { return x.a < y.a; });
  return blocks;
}

inline std::size_t matching_characters(std::u32string_view a, std::u32string_view b) {
  std::size_t total = 0;
  for (const auto& m : matching_blocks(a, b)) total += m.size;
  return total;
}

/// 200 M / (|a| + |b|); two empty strings score 100.
inline double fuzzy_ratio(std::size_t matches, std::size_t len_a, std::size_t len_b) {
  if (len_a + len_b == 0) return 100.0;
  return 200.0 * static_cast<double>(matches) / static_cast<double>(len_a + len_b);
}

inline double fuzzy_ratio(std::u32string_view a, std::u32string_view b) {
  return fuzzy_ratio(matching_characters(a, b), a.size(), b.size());
}

inline double fuzzy_ratio(std::string_view a, std::string_view b) {
  return fuzzy_ratio(utf8_decode(a), utf8_decode(b));
}

// ---------------------------------------------------------------------------
// Normalization

/// Lowercase, map whitespace to spaces, drop characters outside the recognizer
/// vocabulary, then trim and collapse runs of spaces.
inline std::string normalize_token(std::string_view raw) {
  std::string kept;
  kept.reserve(raw.size());
  for (char c : raw) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') c = ' ';
    if (Vocab::contains(c)) kept.push_back(c);
  }
  std::string out;
  out.reserve(kept.size());
  for (char c : kept) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon

/// Normalized, duplicate-free list of names with their display forms.
/// Immutable once built.
class Lexicon {
 public:
  struct Row {
    std::string name;
    std::string display;  // empty: use the trimmed name
  };

  /// Normalizes each row and drops duplicates (first occurrence wins), adding
  /// one message to `warnings` per dropped row.
  static Lexicon build(const std::vector<Row>& rows,
                       std::vector<std::string>* warnings = nullptr) {
    Lexicon lex;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::string norm = normalize_token(rows[i].name);
      if (norm.empty()) {
        throw ConfigError("lexicon: entry " + std::to_string(i + 1) + " ('" + rows[i].name +
                          "') is empty after normalization");
      }
      if (!seen.insert(norm).second) {
        if (warnings) warnings->push_back("duplicate entry '" + norm + "' dropped");
        continue;
      }
      lex.display_.push_back(rows[i].display.empty() ? trim(rows[i].name) : rows[i].display);
      lex.codepoints_.push_back(utf8_decode(norm));
      lex.entries_.push_back(std::move(norm));
    }
    if (lex.entries_.empty()) throw ConfigError("lexicon: no entries");
    return lex;
  }

  static Lexicon from_names(const std::vector<std::string>& names,
                            std::vector<std::string>* warnings = nullptr) {
    std::vector<Row> rows;
    rows.reserve(names.size());
    for (const auto& n : names) rows.push_back({n, {}});
    return build(rows, warnings);
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& entry(std::size_t i) const { return entries_.at(i); }
  const std::u32string& codepoints(std::size_t i) const { return codepoints_.at(i); }
  const std::string& display(std::size_t i) const { return display_.at(i); }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  std::vector<std::string> entries_;
  std::vector<std::u32string> codepoints_;
  std::vector<std::string> display_;
};

// ---------------------------------------------------------------------------
// Decisions

struct MatcherConfig {
  double t_l = 70.0;
  double t_f = 80.0;

  void validate() const {
    if (!(t_l >= 0.0 && t_l <= 100.0)) throw ConfigError("matcher: T_L must lie in [0, 100]");
    if (!(t_f >= 0.0 && t_f <= 100.0)) throw ConfigError("matcher: T_F must lie in [0, 100]");
  }
};

enum class MatchStage { none, levenshtein, fuzzy };

inline const char* stage_name(MatchStage s) {
  switch (s) {
    case MatchStage::levenshtein: return "levenshtein";
    case MatchStage::fuzzy: return "fuzzy";
    case MatchStage::none: break;
  }
  return "none";
}

inline constexpr std::string_view kNoMatch = "no";

struct MatchDecision {
  std::string query;                 // normalized
  std::optional<std::size_t> entry;  // lexicon index when matched
  std::string outcome;               // normalized entry, or "no"
  std::string display;               // display form of the entry, or "no"
  double s_l = 0;                    // best Levenshtein similarity over the lexicon
  double s_f = 0;                    // best fuzzy ratio over the lexicon
  MatchStage stage = MatchStage::none;

  bool matched() const { return entry.has_value(); }
};

/// Per-entry scores for one query against the whole lexicon.
struct EntryScore {
  std::size_t index;
  std::size_t distance;
  double s_l;
  double s_f;
};

inline std::vector<EntryScore> score_lexicon(std::u32string_view query, const Lexicon& lex) {
  std::vector<EntryScore> scores;
  scores.reserve(lex.size());
  for (std::size_t i = 0; i < lex.size(); ++i) {
    const auto& e = lex.codepoints(i);
    const std::size_t d = levenshtein(query, e);
    scores.push_back({i, d, similarity_l(d, query.size(), e.size()),
                      fuzzy_ratio(matching_characters(query, e), query.size(), e.size())});
  }
  return scores;
}

namespace detail {

/// Best entry by `key` descending, then smaller distance, then entry text.
template <typename Key>
const EntryScore& best_by(const std::vector<EntryScore>& scores, const Lexicon& lex, Key key) {
  return *std::min_element(scores.begin(), scores.end(),
                           [&](const EntryScore& x, const EntryScore& y) {
                             if (key(x) != key(y)) return key(x) > key(y);
                             if (x.distance != y.distance) return x.distance < y.distance;
                             return lex.entry(x.index) < lex.entry(y.index);
                           });
}

}  // namespace detail

struct BestMatch {
  std::size_t entry;
  double s_f;
};

/// Lexicon entry with the highest fuzzy ratio. The query is compared as given.
inline BestMatch best_match(std::string_view query, const Lexicon& lex) {
  if (lex.size() == 0) throw ConfigError("best_match: empty lexicon");
  const auto scores = score_lexicon(utf8_decode(query), lex);
  const auto& best = detail::best_by(scores, lex, [](const EntryScore& s) { return s.s_f; });
  return {best.index, best.s_f};
}

/// Levenshtein gate first (best S_L >= T_L), fuzzy fallback (best S_F >= T_F),
/// otherwise "no". The query is normalized before comparison.
inline MatchDecision decide(std::string_view raw_query, const Lexicon& lex,
                            const MatcherConfig& cfg) {
  cfg.validate();
  if (lex.size() == 0) throw ConfigError("decide: empty lexicon");
  MatchDecision d;
  d.query = normalize_token(raw_query);
  d.outcome = d.display = std::string(kNoMatch);
  if (d.query.empty()) return d;

  const auto scores = score_lexicon(utf8_decode(d.query), lex);
  const auto& by_l = detail::best_by(scores, lex, [](const EntryScore& s) { return s.s_l; });
  const auto& by_f = detail::best_by(scores, lex, [](const EntryScore& s) { return s.s_f; });
  d.s_l = by_l.s_l;
  d.s_f = by_f.s_f;
  if (by_l.s_l >= cfg.t_l) {
    d.entry = by_l.index;
    d.stage = MatchStage::levenshtein;
  } else if (by_f.s_f >= cfg.t_f) {
    d.entry = by_f.index;
    d.stage = MatchStage::fuzzy;
  }
  if (d.entry) {
    d.outcome = lex.entry(*d.entry);
    d.display = lex.display(*d.entry);
  }
  return d;
}

}  // namespace medrx
