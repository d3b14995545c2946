#include <gtest/gtest.h>

#include "genrec/vocab.hpp"
#include "test_util.hpp"

using namespace genrec;

TEST(Vocab, ByteLevelLayout) {
  const auto v = Vocab::byte_level();
  EXPECT_EQ(v.size(), 259);
  EXPECT_EQ(v.name(0x41), "<0x41>");
  EXPECT_EQ(v.pad(), 256);
  EXPECT_EQ(v.bos(), 257);
  EXPECT_EQ(v.eos(), 258);
  EXPECT_FALSE(v.contains(kConToken));
}

TEST(Vocab, TextRoundTripIsByteExact) {
  const auto v = Vocab::byte_level();
  const std::string s = "Red Lipstick \xC3\xA9\t!";
  const auto ids = v.encode_text(s);
  EXPECT_EQ(ids.size(), s.size());
  EXPECT_EQ(v.decode(ids), s);
}

TEST(Vocab, ExtendAppendsAndKeepsIds) {
  auto v = Vocab::byte_level();
  const std::vector<std::string> more = {"<s_0_0>", "<b_0_0>", kConToken};
  v.extend(more);
  EXPECT_EQ(v.size(), 262);
  EXPECT_EQ(v.id("<s_0_0>"), 259);
  EXPECT_EQ(v.id(kConToken), 261);
  EXPECT_EQ(v.name(65), "<0x41>");
}

TEST(Vocab, DuplicateExtensionIsAtomic) {
  auto v = Vocab::byte_level();
  const std::vector<std::string> bad = {"<new>", "<bos>"};
  EXPECT_GENREC_ERROR(v.extend(bad), "duplicate_token");
  EXPECT_EQ(v.size(), 259);
  EXPECT_FALSE(v.contains("<new>"));
  const std::vector<std::string> twice = {"<x>", "<x>"};
  EXPECT_GENREC_ERROR(v.extend(twice), "duplicate_token");
  EXPECT_EQ(v.size(), 259);
}

TEST(Vocab, SerializeRoundTripAndHash) {
  auto v = Vocab::byte_level();
  const std::vector<std::string> more = {"<s_0_3>", kConToken};
  v.extend(more);
  const auto back = Vocab::parse(v.serialize());
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.hash(), v.hash());
  EXPECT_NE(Vocab::byte_level().hash(), v.hash());
  EXPECT_GENREC_ERROR(Vocab::parse("garbage\n"), "format_error");
  EXPECT_GENREC_ERROR(v.id("<nope>"), "unknown_token");
}
