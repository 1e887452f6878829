#include "vltrack/lang.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace vltrack;

TEST(Segmenter, FourAttributeDescription) {
  const AttributePhrases a = segment_description("Yellow airplane flying in the air");
  EXPECT_EQ(a.category, Phrase({"airplane"}));
  ASSERT_TRUE(a.appearance);
  EXPECT_EQ(*a.appearance, Phrase({"yellow"}));
  ASSERT_TRUE(a.action);
  EXPECT_EQ(*a.action, Phrase({"flying"}));
  ASSERT_TRUE(a.location);
  EXPECT_EQ(*a.location, Phrase({"in", "the", "air"}));
}

TEST(Segmenter, SyntheticGrammarDescription) {
  const AttributePhrases a = segment_description("red circle moving right in the upper half");
  EXPECT_EQ(a.category, Phrase({"circle"}));
  EXPECT_EQ(*a.appearance, Phrase({"red"}));
  EXPECT_EQ(*a.action, Phrase({"moving", "right"}));
  EXPECT_EQ(*a.location, Phrase({"in", "the", "upper", "half"}));
}

TEST(Segmenter, CategoryOnly) {
  const AttributePhrases a = segment_description("circle");
  EXPECT_EQ(a.category, Phrase({"circle"}));
  EXPECT_FALSE(a.appearance);
  EXPECT_FALSE(a.action);
  EXPECT_FALSE(a.location);
}

TEST(Segmenter, EmptyStringIsContractError) {
  EXPECT_THROW(segment_description(""), std::invalid_argument);
  EXPECT_THROW(segment_description("   "), std::invalid_argument);
}

TEST(Segmenter, InteractionRoutesToLocation) {
  const AttributePhrases a = segment_description("ball played by a man");
  EXPECT_EQ(a.category, Phrase({"ball"}));
  EXPECT_FALSE(a.action);
  ASSERT_TRUE(a.location);
  EXPECT_EQ(*a.location, Phrase({"played", "by", "a", "man"}));
}

TEST(Segmenter, MultiClauseLocationStaysSinglePhrase) {
  const AttributePhrases a = segment_description("person standing on the tower near the man");
  EXPECT_EQ(*a.action, Phrase({"standing"}));
  EXPECT_EQ(*a.location, Phrase({"on", "the", "tower", "near", "the", "man"}));
}

TEST(Tokenize, AbsentAttribute) {
  const Vocabulary v = Vocabulary::standard();
  const std::vector<long> ids = tokenize(std::nullopt, v, 4);
  EXPECT_EQ(ids, std::vector<long>({Vocabulary::kNone, Vocabulary::kPad, Vocabulary::kPad,
                                    Vocabulary::kPad}));
}

TEST(Tokenize, Padding) {
  const Vocabulary v = Vocabulary::standard();
  const std::vector<long> ids = tokenize(Phrase{"red"}, v, 2);
  EXPECT_EQ(ids[0], v.id("red"));
  EXPECT_EQ(ids[1], Vocabulary::kPad);
}

TEST(Tokenize, UnknownWordsMapToUnk) {
  const Vocabulary v = Vocabulary::standard();
  const std::vector<long> ids = tokenize(Phrase{"zeppelin"}, v, 2);
  EXPECT_EQ(ids[0], Vocabulary::kUnk);
}

TEST(Tokenize, LengthStable) {
  const Vocabulary v = Vocabulary::standard();
  for (long len : {1L, 3L, 8L}) {
    EXPECT_EQ(tokenize(std::nullopt, v, len).size(), static_cast<size_t>(len));
    EXPECT_EQ(tokenize(Phrase{"in", "the", "upper", "half", "near", "the", "center", "now",
                              "extra", "words"},
                       v, len)
                  .size(),
              static_cast<size_t>(len));
  }
}

TEST(Tokenize, RoundTripInVocabulary) {
  const Vocabulary v = Vocabulary::standard();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<size_t> pick_len(1, 6);
  std::uniform_int_distribution<long> pick_tok(3, v.size() - 1);  // skip reserved ids
  for (int trial = 0; trial < 100; ++trial) {
    Phrase p;
    const size_t n = pick_len(rng);
    for (size_t i = 0; i < n; ++i)
      p.push_back(v.id_to_token[static_cast<size_t>(pick_tok(rng))]);
    const auto back = detokenize(tokenize(p, v, 8), v);
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, p);
  }
  EXPECT_FALSE(detokenize(tokenize(std::nullopt, v, 8), v).has_value());
}

TEST(Vocabulary, ReservedIdsAndStability) {
  const Vocabulary v = Vocabulary::standard();
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.id("<none>"), 1);
  EXPECT_EQ(v.id("<unk>"), 2);
  const Vocabulary w = Vocabulary::standard();
  EXPECT_EQ(v.id_to_token, w.id_to_token);  // dense, deterministic order
  for (long i = 0; i < v.size(); ++i)
    EXPECT_EQ(v.id(v.id_to_token[static_cast<size_t>(i)]), i);
}

TEST(Annotations, JsonLineRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "vltrack_test_annotations.jsonl";
  {
    std::ofstream out(path);
    out << R"({"category":"circle","appearance":"red","action":"moving right","location":"in the upper half"})"
        << "\n";
    out << R"({"category":"square","appearance":null,"action":null,"location":null})" << "\n";
  }
  const auto recs = read_attribute_annotations(path.string());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].category, Phrase({"circle"}));
  EXPECT_EQ(*recs[0].action, Phrase({"moving", "right"}));
  EXPECT_FALSE(recs[1].appearance);
  EXPECT_FALSE(recs[1].location);

  // Serialization inverts ingestion.
  const auto j = attributes_to_json(recs[0]);
  EXPECT_EQ(attributes_from_json(j), recs[0]);
  fs::remove(path);
}
