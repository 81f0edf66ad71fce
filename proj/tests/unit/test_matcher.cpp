#include <gtest/gtest.h>

#include "medrx/lexicon_io.hpp"
#include "medrx/matcher.hpp"
#include "oracles.hpp"

using namespace medrx;

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein("", "abc"), 3u);
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(levenshtein("panadol", "panadol"), 0u);
  EXPECT_EQ(levenshtein("naïve", "naive"), 1u);  // code points, not bytes
}

TEST(Levenshtein, AgreesWithFullTable) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto a = oracle::random_word(rng, 0, 9, "abc"), b = oracle::random_word(rng, 0, 9, "abc");
    ASSERT_EQ(levenshtein(a, b), oracle::edit_distance(a, b)) << a << " / " << b;
    EXPECT_LE(levenshtein(a, b), std::max(a.size(), b.size()));
  }
}

TEST(SimilarityL, Examples) {
  EXPECT_EQ(similarity_l("abc", "abc"), 100.0);
  EXPECT_NEAR(similarity_l("abc", "abd"), 66.67, 0.01);
  EXPECT_EQ(similarity_l("abc", ""), 0.0);
  EXPECT_EQ(similarity_l("", ""), 100.0);
}

TEST(SimilarityL, HundredOnlyForEqualStrings) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto a = oracle::random_word(rng, 0, 4, "ab"), b = oracle::random_word(rng, 0, 4, "ab");
    const double s = similarity_l(a, b);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 100.0);
    EXPECT_EQ(s == 100.0, a == b);
  }
}

TEST(FuzzyRatio, Examples) {
  EXPECT_EQ(fuzzy_ratio("panadol", "panadol"), 100.0);
  EXPECT_DOUBLE_EQ(fuzzy_ratio("abcd", "abce"), 75.0);
  EXPECT_EQ(fuzzy_ratio("ab", "cd"), 0.0);
  EXPECT_EQ(fuzzy_ratio("", ""), 100.0);
  EXPECT_NEAR(fuzzy_ratio("panado1", "panadol"), 2.0 * 6 / 14 * 100, 1e-9);
}

TEST(FuzzyRatio, AgreesWithExhaustiveBlockSearch) {
  Rng rng(3);
  for (int i = 0; i < 3000; ++i) {
    const auto a = oracle::random_word(rng, 0, 10, "abc"), b = oracle::random_word(rng, 0, 10, "abc");
    ASSERT_EQ(matching_characters(utf8_decode(a), utf8_decode(b)), oracle::ratcliff_matches(a, b))
        << a << " / " << b;
    const double r = fuzzy_ratio(a, b);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 100.0);
  }
}

TEST(MatchingBlocks, LongestFirstThenSides) {
  // "abxcd" vs "abcd": block "ab", then "cd" on the right (x unmatched).
  const auto blocks = matching_blocks(U"abxcd", U"abcd");
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].a, 0u);
  EXPECT_EQ(blocks[0].size, 2u);
  EXPECT_EQ(blocks[1].a, 3u);
  EXPECT_EQ(blocks[1].b, 2u);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_token("  Panadol "), "panadol");
  EXPECT_EQ(normalize_token("CO-AMOX"), "co-amox");
  EXPECT_EQ(normalize_token("pan@dol!"), "pandol");
  EXPECT_EQ(normalize_token("a \t\n b"), "a b");
  EXPECT_EQ(normalize_token("@@@"), "");
}

TEST(BestMatch, Examples) {
  const auto lex = Lexicon::from_names({"panadol", "augmentin"});
  auto m = best_match("panadol", lex);
  EXPECT_EQ(lex.entry(m.entry), "panadol");
  EXPECT_EQ(m.s_f, 100.0);
  m = best_match("panado1", lex);
  EXPECT_EQ(lex.entry(m.entry), "panadol");
  EXPECT_NEAR(m.s_f, 85.714, 1e-3);
  EXPECT_THROW(best_match("x", Lexicon{}), ConfigError);
}

TEST(BestMatch, TiesBreakOnDistanceThenText) {
  // "ab" vs "abxx": S_F 66.7, D 2;  vs "ba": S_F 50;  vs "abyy": S_F 66.7, D 2 -> text order
  const auto lex = Lexicon::from_names({"abyy", "ba", "abxx"});
  EXPECT_EQ(lex.entry(best_match("ab", lex).entry), "abxx");
}

TEST(Decide, Examples) {
  const auto lex = Lexicon::from_names({"panadol", "augmentin"});
  auto d = decide("Panadol", lex, {});
  EXPECT_EQ(d.outcome, "panadol");
  EXPECT_EQ(d.stage, MatchStage::levenshtein);
  EXPECT_EQ(d.s_l, 100.0);

  d = decide("zzzzz", lex, {});
  EXPECT_EQ(d.outcome, "no");
  EXPECT_FALSE(d.matched());
  EXPECT_LE(d.s_l, 28.6);
  EXPECT_LE(d.s_f, 33.3);

  const auto amox = Lexicon::from_names({"amoxicillin"});
  d = decide("amoxcillin", amox, {95, 90});
  EXPECT_NEAR(d.s_l, 90.909, 1e-3);
  EXPECT_NEAR(d.s_f, 95.238, 1e-3);
  EXPECT_EQ(d.stage, MatchStage::fuzzy);
  EXPECT_EQ(d.outcome, "amoxicillin");

  d = decide("  !! ", lex, {});
  EXPECT_EQ(d.outcome, "no");
  EXPECT_EQ(d.stage, MatchStage::none);
}

TEST(Decide, ThresholdIsInclusive) {
  // D = 3 over length 10: S_L exactly 70.
  const auto lex = Lexicon::from_names({"abcdefghij"});
  const auto d = decide("abcdefgxyz", lex, {70, 100});
  EXPECT_EQ(d.s_l, 70.0);
  EXPECT_EQ(d.stage, MatchStage::levenshtein);
}

TEST(Decide, DisplayFormIsReturned) {
  const auto lex = Lexicon::build({{"Co-Amoxiclav", "Co-Amoxiclav 625mg"}, {"Panadol ", ""}});
  EXPECT_EQ(decide("co-amoxiclav", lex, {}).display, "Co-Amoxiclav 625mg");
  EXPECT_EQ(decide("panadol", lex, {}).display, "Panadol");
}

TEST(Decide, AgreesWithBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> names;
    for (int i = 0; i < 30; ++i) names.push_back(oracle::random_word(rng, 3, 8, "abcde"));
    const auto lex = Lexicon::from_names(names);
    for (int q = 0; q < 50; ++q) {
      const std::string query = rng.bernoulli(0.5)
                                    ? oracle::one_edit(lex.entry(rng.below(lex.size())), rng, "abcde")
                                    : oracle::random_word(rng, 1, 8, "abcde");
      const double t_l = double(rng.below(101)), t_f = double(rng.below(101));
      const auto got = decide(query, lex, {t_l, t_f});
      const auto want = oracle::decide(query, lex.entries(), t_l, t_f);
      ASSERT_EQ(got.entry, want.entry) << query;
      ASSERT_EQ(stage_name(got.stage), want.stage) << query;
    }
  }
}

TEST(Lexicon, BuildNormalizesAndDeduplicates) {
  std::vector<std::string> warnings;
  const auto lex = Lexicon::from_names({"Panadol", "panadol ", "Augmentin"}, &warnings);
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_THROW(Lexicon::from_names({}), ConfigError);
  EXPECT_THROW(Lexicon::from_names({"@@"}), ConfigError);
}

TEST(LexiconCsv, Parsing) {
  auto r = parse_lexicon("panadol\naugmentin\n");
  EXPECT_EQ(r.lexicon.size(), 2u);
  EXPECT_TRUE(r.warnings.empty());

  r = parse_lexicon("# header\npanadol\n\n  # indented comment\nPanadol\n");
  EXPECT_EQ(r.lexicon.size(), 1u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("line 5"), std::string::npos);
  EXPECT_NE(r.warnings[0].find("line 2"), std::string::npos);

  r = parse_lexicon("\xEF\xBB\xBF\"co-amoxiclav\",\"Co-Amoxiclav, 625\"\r\nflagyl,Flagyl\r\n");
  EXPECT_EQ(r.lexicon.entry(0), "co-amoxiclav");
  EXPECT_EQ(r.lexicon.display(0), "Co-Amoxiclav, 625");
  EXPECT_EQ(r.lexicon.display(1), "Flagyl");
}

TEST(LexiconCsv, ErrorsCarryLineNumbers) {
  auto expect_line = [](const std::string& text, const std::string& needle) {
    try {
      parse_lexicon(text);
      FAIL() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line("ok\n\"unterminated\n", "line 2");
  expect_line("ok\na,b,c\n", "line 2");
  expect_line("ok\nfine\n\xff\xfe\n", "line 3");
  expect_line("a\n@@@\n", "line 2");
  EXPECT_THROW(parse_lexicon("# only comments\n\n"), ConfigError);
  EXPECT_THROW(load_lexicon("/nonexistent/lexicon.csv"), IoError);
}
