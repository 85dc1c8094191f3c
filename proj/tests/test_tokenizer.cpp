// Copyright 2026 The riattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "riattn/tokenizer.hpp"

using namespace riattn;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::UsageError;  // sentinel: nothing thrown
}

}  // namespace

TEST(Tokenizer, CanonicalVocabulary) {
  const auto v = Vocabulary::canonical();
  EXPECT_EQ(v.size(), 13u);
  EXPECT_EQ(v.word(0), "<SOS>");
  EXPECT_EQ(v.word(1), "<EOS>");
  EXPECT_EQ(v.word(2), "<;>");
  EXPECT_EQ(v.word(3), "<NULL>");
  // first-occurrence order of "obstacles on the left lane", ...
  EXPECT_EQ(v.id("obstacles"), 4u);
  EXPECT_EQ(v.id("on"), 5u);
  EXPECT_EQ(v.id("right"), 12u);
}

TEST(Tokenizer, CanonicalMaxLengthIs37) {
  const auto reasons = canonical_reason_strings();
  EXPECT_EQ(max_sentence_length(reasons), kCanonicalMaxLength);
  EXPECT_EQ(kCanonicalMaxLength, 37u);
}

TEST(Tokenizer, BuildIsCaseAndSpaceInsensitive) {
  std::vector<std::string> corpus{"Red  CAR", "red light"};
  const auto v = Vocabulary::build(corpus);
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.id("car"), 5u);
  EXPECT_EQ(code_of([] { Vocabulary::build(std::vector<std::string>{}); }), Errc::EmptyCorpus);
}

TEST(Tokenizer, LookupErrors) {
  const auto v = Vocabulary::canonical();
  EXPECT_EQ(code_of([&] { v.id("bicycle"); }), Errc::UnknownWord);
  EXPECT_EQ(code_of([&] { v.word(13); }), Errc::InvalidTokenId);
  EXPECT_FALSE(v.find("bicycle").has_value());
}

TEST(Tokenizer, FromTokensRoundTrip) {
  const auto v = Vocabulary::canonical();
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
  std::vector<std::string> bad{"<EOS>", "<SOS>", "<;>", "<NULL>"};
  EXPECT_EQ(code_of([&] { Vocabulary::from_tokens(bad); }), Errc::ParseError);
  std::vector<std::string> dup{"<SOS>", "<EOS>", "<;>", "<NULL>", "a", "a"};
  EXPECT_EQ(code_of([&] { Vocabulary::from_tokens(dup); }), Errc::ParseError);
}

TEST(Tokenizer, EncodeLayout) {
  const auto v = Vocabulary::canonical();
  std::vector<std::string> reasons{"no lane on the left", "solid line on the right"};
  const auto seq = encode(reasons, v, kCanonicalMaxLength);
  ASSERT_EQ(seq.size(), 37u);
  EXPECT_EQ(seq.ids[0], Vocabulary::kSos);
  EXPECT_EQ(seq.ids[6], Vocabulary::kDelim);
  EXPECT_EQ(seq.ids[12], Vocabulary::kEos);
  for (std::size_t i = 13; i < 37; ++i) EXPECT_EQ(seq.ids[i], Vocabulary::kNull);
  EXPECT_TRUE(is_valid_sequence(seq, v));
  EXPECT_EQ(decode(seq, v), "no lane on the left <;> solid line on the right");
  EXPECT_EQ(split_reasons(seq, v), reasons);
}

TEST(Tokenizer, EncodeNoReasons) {
  const auto v = Vocabulary::canonical();
  const auto seq = encode(std::vector<std::string>{}, v, 5);
  EXPECT_EQ(seq.ids, (std::vector<TokenId>{0, 1, 3, 3, 3}));
  EXPECT_EQ(decode(seq, v), "");
  EXPECT_TRUE(split_reasons(seq, v).empty());
}

TEST(Tokenizer, EncodeErrors) {
  const auto v = Vocabulary::canonical();
  std::vector<std::string> one{"no lane on the left"};
  EXPECT_EQ(code_of([&] { encode(one, v, 6); }), Errc::SentenceTooLong);
  EXPECT_NO_THROW(encode(one, v, 7));
  std::vector<std::string> unknown{"no lane on the moon"};
  EXPECT_EQ(code_of([&] { encode(unknown, v, 37); }), Errc::UnknownWord);
  std::vector<std::string> empty{"  "};
  EXPECT_EQ(code_of([&] { encode(empty, v, 37); }), Errc::ParseError);
}

TEST(Tokenizer, AllCanonicalSubsetsRoundTrip) {
  const auto v = Vocabulary::canonical();
  for (unsigned mask = 0; mask < 64; ++mask) {
    std::vector<std::string> reasons;
    for (std::size_t c = 0; c < kNumReasons; ++c)
      if (mask >> c & 1u) reasons.emplace_back(kCanonicalReasons[c]);
    const auto seq = encode(reasons, v, kCanonicalMaxLength);
    EXPECT_TRUE(is_valid_sequence(seq, v));
    EXPECT_EQ(split_reasons(seq, v), reasons);
  }
}

TEST(Tokenizer, PaddingInvariant) {
  const auto v = Vocabulary::canonical();
  EXPECT_TRUE(check_sequence({{0, 4, 1, 3}}, v) == std::nullopt);
  EXPECT_TRUE(check_sequence({{4, 1, 3}}, v).has_value());      // no <SOS>
  EXPECT_TRUE(check_sequence({{0, 4, 3, 1}}, v).has_value());   // <NULL> before <EOS>
  EXPECT_TRUE(check_sequence({{0, 1, 4}}, v).has_value());      // word after <EOS>
  EXPECT_TRUE(check_sequence({{0, 4, 4}}, v).has_value());      // no <EOS>
  EXPECT_TRUE(check_sequence({{0, 0, 1}}, v).has_value());      // repeated <SOS>
  EXPECT_TRUE(check_sequence({{0, 99, 1}}, v).has_value());     // out of range
}

TEST(Tokenizer, SplitDropsEmptySegments) {
  const auto v = Vocabulary::canonical();
  TokenSequence seq{{0, 2, v.id("no"), v.id("lane"), 2, 2, 1, 3}};
  EXPECT_EQ(split_reasons(seq, v), (std::vector<std::string>{"no lane"}));
}
