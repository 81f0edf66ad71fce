#pragma once

// Lexicon CSV: one entry per line, optional second column holding the display
// form. Lines starting with '#' and blank lines are skipped. Fields may be
// double-quoted, with "" as an escaped quote.

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/matcher.hpp"
#include "medrx/utf8.hpp"
#include "medrx/weights_io.hpp"

namespace medrx {

struct LexiconLoad {
  Lexicon lexicon;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    throw FormatError("lexicon line " + std::to_string(line_no) + ": " + why);
  };
  std::vector<std::string> fields;
  std::string cur;
  std::size_t i = 0;
  while (true) {
    cur.clear();
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        cur.push_back(line[i++]);
      }
      if (!closed) fail("unterminated quoted field");
      if (i < line.size() && line[i] != ',') fail("unexpected character after closing quote");
    } else {
      while (i < line.size() && line[i] != ',') {
        if (line[i] == '"') fail("quote inside unquoted field");
        cur.push_back(line[i++]);
      }
    }
    fields.push_back(cur);
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return fields;
}

}  // namespace detail

inline LexiconLoad parse_lexicon(std::string_view text) {
  std::vector<Lexicon::Row> rows;
  std::unordered_map<std::string, std::size_t> first_line;
  LexiconLoad out{Lexicon{}, {}};
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    try {
      utf8_decode(line);
    } catch (const FormatError& e) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": " + e.what());
    }
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() > 2) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": expected 1 or 2 columns, got " +
                        std::to_string(fields.size()));
    }
    const std::string norm = normalize_token(fields[0]);
    if (norm.empty()) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": entry '" + fields[0] +
                        "' is empty after normalization");
    }
    const auto [it, inserted] = first_line.emplace(norm, line_no);
    if (!inserted) {
      out.warnings.push_back("lexicon line " + std::to_string(line_no) + ": duplicate of line " +
                             std::to_string(it->second) + " ('" + norm + "') dropped");
      continue;
    }
    rows.push_back({fields[0], fields.size() == 2 ? fields[1] : std::string{}});
  }
  if (rows.empty()) throw ConfigError("lexicon: no entries");
  out.lexicon = Lexicon::build(rows);
  return out;
}

inline LexiconLoad load_lexicon(const std::string& path) {
  try {
    return parse_lexicon(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace medrx
