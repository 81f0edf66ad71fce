#pragma once

// Synthetic prescription-line fixtures: lexicon names rendered in a 3x5
// dot-matrix font on a dark page, with exact box/mask annotations and an
// optional character-corruption channel that stands in for recognizer errors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medrx/errors.hpp"
#include "medrx/geometry.hpp"
#include "medrx/matcher.hpp"
#include "medrx/pgm.hpp"
#include "medrx/random.hpp"
#include "medrx/weights_io.hpp"

namespace medrx {

inline constexpr std::size_t kGlyphWidth = 3;
inline constexpr std::size_t kGlyphHeight = 5;
inline constexpr std::size_t kGlyphAdvance = kGlyphWidth + 1;

/// Five rows of three pixels; '#' marks ink.
inline const std::array<std::string_view, kGlyphHeight>& glyph(char c) {
  using G = std::array<std::string_view, kGlyphHeight>;
  static const G blank{"...", "...", "...", "...", "..."};
  static const G letters[26] = {
      {".#.", "#.#", "###", "#.#", "#.#"},  // a
      {"##.", "#.#", "##.", "#.#", "##."},  // b
      {".##", "#..", "#..", "#..", ".##"},  // c
      {"##.", "#.#", "#.#", "#.#", "##."},  // d
      {"###", "#..", "##.", "#..", "###"},  // e
      {"###", "#..", "##.", "#..", "#.."},  // f
      {".##", "#..", "#.#", "#.#", ".##"},  // g
      {"#.#", "#.#", "###", "#.#", "#.#"},  // h
      {"###", ".#.", ".#.", ".#.", "###"},  // i
      {"..#", "..#", "..#", "#.#", ".#."},  // j
      {"#.#", "#.#", "##.", "#.#", "#.#"},  // k
      {"#..", "#..", "#..", "#..", "###"},  // l
      {"#.#", "###", "###", "#.#", "#.#"},  // m
      {"##.", "#.#", "#.#", "#.#", "#.#"},  // n
      {".#.", "#.#", "#.#", "#.#", ".#."},  // o
      {"##.", "#.#", "##.", "#..", "#.."},  // p
      {".#.", "#.#", "#.#", "##.", ".##"},  // q
      {"##.", "#.#", "##.", "#.#", "#.#"},  // r
      {".##", "#..", ".#.", "..#", "##."},  // s
      {"###", ".#.", ".#.", ".#.", ".#."},  // t
      {"#.#", "#.#", "#.#", "#.#", "###"},  // u
      {"#.#", "#.#", "#.#", "#.#", ".#."},  // v
      {"#.#", "#.#", "###", "###", "#.#"},  // w
      {"#.#", "#.#", ".#.", "#.#", "#.#"},  // x
      {"#.#", "#.#", ".#.", ".#.", ".#."},  // y
      {"###", "..#", ".#.", "#..", "###"},  // z
  };
  static const G digits[10] = {
      {"###", "#.#", "#.#", "#.#", "###"},  // 0
      {".#.", "##.", ".#.", ".#.", "###"},  // 1
      {"##.", "..#", ".#.", "#..", "###"},  // 2
      {"##.", "..#", ".#.", "..#", "##."},  // 3
      {"#.#", "#.#", "###", "..#", "..#"},  // 4
      {"###", "#..", "##.", "..#", "##."},  // 5
      {".##", "#..", "###", "#.#", "###"},  // 6
      {"###", "..#", ".#.", ".#.", ".#."},  // 7
      {"###", "#.#", "###", "#.#", "###"},  // 8
      {"###", "#.#", "###", "..#", "##."},  // 9
  };
  static const G hyphen{"...", "...", "###", "...", "..."};
  if (c >= 'a' && c <= 'z') return letters[c - 'a'];
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c == '-') return hyphen;
  return blank;
}

struct FixtureConfig {
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::size_t height = 64;
  std::size_t width = 256;
  double p_noise = 0.0;        // per-character substitution probability
  std::size_t max_edits = 0;   // cap on substitutions per transcript, 0 = no cap
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz";

  void validate() const {
    if (count == 0) throw ConfigError("fixtures: count must be at least 1");
    if (height < kGlyphHeight || width < kGlyphWidth)
      throw ConfigError("fixtures: page too small for one glyph");
    if (!(p_noise >= 0.0 && p_noise <= 1.0))
      throw ConfigError("fixtures: p_noise must lie in [0, 1]");
    if (alphabet.empty()) throw ConfigError("fixtures: empty corruption alphabet");
  }
};

struct Annotation {
  Box box;
  BinaryMask mask;         // image-sized, exactly the band rectangle
  std::string transcript;  // ground truth, a normalized lexicon entry
  std::string observed;    // transcript after the corruption channel
};

struct Fixture {
  std::string name;
  GrayImage image;
  std::vector<Annotation> annotations;
};

struct FixtureSet {
  FixtureConfig config;
  std::vector<Fixture> fixtures;
};

/// Draws `text` with its top-left glyph corner at (x0, y0). Returns the band
/// box covering every glyph cell.
inline Box render_text(GrayImage& img, std::string_view text, std::size_t x0, std::size_t y0) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& g = glyph(text[i]);
    for (std::size_t y = 0; y < kGlyphHeight; ++y)
      for (std::size_t x = 0; x < kGlyphWidth; ++x)
        if (g[y][x] == '#') img.at(y0 + y, x0 + i * kGlyphAdvance + x) = 255;
  }
  const double w = static_cast<double>(text.size() * kGlyphAdvance - 1);
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0) + w,
          static_cast<double>(y0 + kGlyphHeight)};
}

/// Substitutes each character with probability p by a different alphabet
/// character, stopping after `max_edits` substitutions when nonzero.
inline std::string corrupt(std::string_view text, const FixtureConfig& cfg, Rng& rng) {
  std::string out(text);
  std::size_t edits = 0;
  for (char& c : out) {
    if (cfg.max_edits && edits >= cfg.max_edits) break;
    if (!rng.bernoulli(cfg.p_noise)) continue;
    std::string choices;
    for (char a : cfg.alphabet)
      if (a != c) choices.push_back(a);
    if (choices.empty()) continue;
    c = choices[rng.below(choices.size())];
    ++edits;
  }
  return out;
}

/// Deterministic in (config, lexicon): one lexicon name per page at a random
/// position.
inline FixtureSet gen_fixtures(const FixtureConfig& cfg, const Lexicon& lexicon) {
  cfg.validate();
  FixtureSet set{cfg, {}};
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const std::string& text = lexicon.entry(rng.below(lexicon.size()));
    const std::size_t band_w = text.size() * kGlyphAdvance - 1;
    if (band_w > cfg.width) {
      throw ConfigError("fixtures: entry '" + text + "' does not fit a " +
                        std::to_string(cfg.width) + "-pixel page");
    }
    Fixture f;
    char name[32];
    std::snprintf(name, sizeof name, "image_%04zu", i);
    f.name = name;
    f.image = GrayImage(cfg.height, cfg.width);
    const std::size_t y0 = rng.below(cfg.height - kGlyphHeight + 1);
    const std::size_t x0 = rng.below(cfg.width - band_w + 1);
    Annotation a;
    a.box = render_text(f.image, text, x0, y0);
    a.mask = BinaryMask::from_box(a.box, cfg.height, cfg.width);
    a.transcript = text;
    a.observed = corrupt(text, cfg, rng);
    f.annotations.push_back(std::move(a));
    set.fixtures.push_back(std::move(f));
  }
  return set;
}

// ---------------------------------------------------------------------------
// On-disk form: <name>.pgm + <name>.json per page, plus manifest.json.

inline nlohmann::json rle_to_json(const Rle& r) {
  return {{"size", {r.height, r.width}}, {"counts", r.counts}};
}

inline Rle rle_from_json(const nlohmann::json& j) {
  Rle r;
  r.height = j.at("size").at(0).get<std::size_t>();
  r.width = j.at("size").at(1).get<std::size_t>();
  r.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  return r;
}

inline nlohmann::json annotations_to_json(const Fixture& f) {
  nlohmann::json boxes = nlohmann::json::array(), masks = nlohmann::json::array(),
                 transcripts = nlohmann::json::array(), observed = nlohmann::json::array();
  for (const auto& a : f.annotations) {
    boxes.push_back({a.box.x1, a.box.y1, a.box.x2, a.box.y2});
    masks.push_back(rle_to_json(rle_encode(a.mask)));
    transcripts.push_back(a.transcript);
    observed.push_back(a.observed);
  }
  return {{"image", f.name + ".pgm"}, {"boxes", boxes},          {"masks", masks},
          {"transcripts", transcripts}, {"observed", observed}};
}

inline std::vector<Annotation> annotations_from_json(const nlohmann::json& j) {
  std::vector<Annotation> out;
  const auto& boxes = j.at("boxes");
  const auto& masks = j.at("masks");
  const auto& transcripts = j.at("transcripts");
  if (masks.size() != boxes.size() || transcripts.size() != boxes.size()) {
    throw FormatError("annotations: boxes, masks and transcripts differ in length");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    Annotation a;
    const auto b = boxes.at(i).get<std::vector<double>>();
    if (b.size() != 4) throw FormatError("annotations: box " + std::to_string(i) + " needs 4 values");
    a.box = {b[0], b[1], b[2], b[3]};
    a.mask = rle_decode(rle_from_json(masks.at(i)));
    a.transcript = transcripts.at(i).get<std::string>();
    a.observed = j.contains("observed") ? j.at("observed").at(i).get<std::string>() : a.transcript;
    out.push_back(std::move(a));
  }
  return out;
}

inline void save_fixtures(const FixtureSet& set, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  nlohmann::json names = nlohmann::json::array();
  for (const auto& f : set.fixtures) {
    save_pgm(f.image, (dir / (f.name + ".pgm")).string());
    write_file((dir / (f.name + ".json")).string(), annotations_to_json(f).dump(2) + "\n");
    names.push_back(f.name);
  }
  const nlohmann::json manifest{{"seed", set.config.seed},
                                {"count", set.config.count},
                                {"p_noise", set.config.p_noise},
                                {"max_edits", set.config.max_edits},
                                {"alphabet", set.config.alphabet},
                                {"images", names}};
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline FixtureSet load_fixtures(const std::filesystem::path& dir) {
  FixtureSet set;
  try {
    const auto manifest = nlohmann::json::parse(read_file((dir / "manifest.json").string()));
    set.config.seed = manifest.value("seed", std::uint64_t{0});
    set.config.p_noise = manifest.value("p_noise", 0.0);
    set.config.max_edits = manifest.value("max_edits", std::size_t{0});
    set.config.alphabet = manifest.value("alphabet", set.config.alphabet);
    for (const auto& n : manifest.at("images")) {
      Fixture f;
      f.name = n.get<std::string>();
      f.image = load_pgm((dir / (f.name + ".pgm")).string());
      f.annotations =
          annotations_from_json(nlohmann::json::parse(read_file((dir / (f.name + ".json")).string())));
      set.fixtures.push_back(std::move(f));
    }
    set.config.count = set.fixtures.size();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return set;
}

}  // namespace medrx
