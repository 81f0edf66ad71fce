#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medrx {

/// Character-level token set: PAD, EOS, UNK, then a-z, 0-9, space, hyphen.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr std::string_view kCharacters = "abcdefghijklmnopqrstuvwxyz0123456789 -";
  static constexpr std::size_t kSize = 3 + kCharacters.size();

  constexpr std::size_t size() const { return kSize; }

  static constexpr bool contains(char c) { return kCharacters.find(c) != std::string_view::npos; }

  static constexpr int id_of(char c) {
    const auto pos = kCharacters.find(c);
    return pos == std::string_view::npos ? kUnk : static_cast<int>(pos) + 3;
  }

  /// Character for a character token; nullopt for PAD, EOS, UNK.
  static constexpr std::optional<char> char_of(int id) {
    if (id < 3 || id >= static_cast<int>(kSize)) return std::nullopt;
    return kCharacters[static_cast<std::size_t>(id - 3)];
  }

  static std::vector<int> encode(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(id_of(c));
    return ids;
  }
};

/// Greedy decoder output: ids up to and including the first EOS, plus the
/// text they spell with PAD and UNK dropped.
struct TokenSequence {
  std::vector<int> ids;
  std::string text;

  static TokenSequence from_ids(const std::vector<int>& raw) {
    TokenSequence seq;
    for (int id : raw) {
      seq.ids.push_back(id);
      if (id == Vocab::kEos) break;
      if (auto c = Vocab::char_of(id)) seq.text.push_back(*c);
    }
    return seq;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

}  // namespace medrx
