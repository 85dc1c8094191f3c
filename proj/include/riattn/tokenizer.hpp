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

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "riattn/error.hpp"

namespace riattn {

using TokenId = std::size_t;

inline constexpr std::string_view kSosToken = "<SOS>";
inline constexpr std::string_view kEosToken = "<EOS>";
inline constexpr std::string_view kDelimToken = "<;>";
inline constexpr std::string_view kNullToken = "<NULL>";

inline constexpr std::size_t kNumReasons = 6;

/// The six reason classes, in class-index order. 0-2 concern the left side,
/// 3-5 the right side.
inline constexpr std::array<std::string_view, kNumReasons> kCanonicalReasons = {
    "obstacles on the left lane", "no lane on the left",   "solid line on the left",
    "obstacles on the right lane", "no lane on the right", "solid line on the right",
};

/// Fixed sentence length for the canonical reasons: 30 words, 5 delimiters,
/// start and end tokens.
inline constexpr std::size_t kCanonicalMaxLength = 37;

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Lowercased whitespace-delimited words.
inline std::vector<std::string> split_words(std::string_view sentence) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && std::isspace(static_cast<unsigned char>(sentence[i]))) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !std::isspace(static_cast<unsigned char>(sentence[j]))) ++j;
    if (j > i) words.push_back(to_lower(sentence.substr(i, j - i)));
    i = j;
  }
  return words;
}

/// Words joined by single spaces, lowercased.
inline std::string normalize_phrase(std::string_view phrase) {
  std::string out;
  for (const auto& w : split_words(phrase)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

inline std::vector<std::string> canonical_reason_strings() {
  return {kCanonicalReasons.begin(), kCanonicalReasons.end()};
}

/// Dense word <-> id map. Ids 0..3 are always <SOS>, <EOS>, <;>, <NULL>.
class Vocabulary {
 public:
  static constexpr TokenId kSos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kDelim = 2;
  static constexpr TokenId kNull = 3;

  /// Specials first, then each distinct word in first-occurrence order.
  static Vocabulary build(std::span<const std::string> corpus) {
    if (corpus.empty()) fail(Errc::EmptyCorpus, "cannot build a vocabulary from no sentences");
    Vocabulary v;
    for (const auto& sentence : corpus)
      for (auto& w : split_words(sentence))
        if (!v.index_.contains(w)) v.push(std::move(w));
    return v;
  }

  static Vocabulary canonical() {
    const auto reasons = canonical_reason_strings();
    return build(reasons);
  }

  /// Rebuilds from an explicit id-ordered token list (e.g. a vocabulary file).
  static Vocabulary from_tokens(std::span<const std::string> tokens) {
    if (tokens.size() < 4 || tokens[0] != kSosToken || tokens[1] != kEosToken ||
        tokens[2] != kDelimToken || tokens[3] != kNullToken)
      fail(Errc::ParseError, "vocabulary must start with <SOS>, <EOS>, <;>, <NULL>");
    Vocabulary v;
    for (std::size_t i = 4; i < tokens.size(); ++i) {
      if (tokens[i].empty() || v.index_.contains(tokens[i]))
        fail(Errc::ParseError, "duplicate or empty vocabulary token at line " + std::to_string(i + 1));
      v.push(tokens[i]);
    }
    return v;
  }

  std::size_t size() const noexcept { return words_.size(); }

  std::optional<TokenId> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view word) const {
    auto found = find(word);
    if (!found) fail(Errc::UnknownWord, "'" + std::string(word) + "' is not in the vocabulary");
    return *found;
  }

  const std::string& word(TokenId id) const {
    if (id >= words_.size())
      fail(Errc::InvalidTokenId, "token id " + std::to_string(id) + " >= " + std::to_string(size()));
    return words_[id];
  }

  const std::vector<std::string>& tokens() const noexcept { return words_; }

  static bool is_special(TokenId id) noexcept { return id <= kNull; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  Vocabulary() {
    push(std::string(kSosToken));
    push(std::string(kEosToken));
    push(std::string(kDelimToken));
    push(std::string(kNullToken));
  }

  void push(std::string w) {
    index_.emplace(w, words_.size());
    words_.push_back(std::move(w));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Fixed-length padded sentence: [SOS, words..., EOS, NULL...].
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const noexcept { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Length needed to hold every reason of `reasons` in one sentence: all words,
/// one delimiter between consecutive reasons, plus start and end tokens.
inline std::size_t max_sentence_length(std::span<const std::string> reasons) {
  std::size_t words = 0;
  for (const auto& r : reasons) words += split_words(r).size();
  return words + (reasons.empty() ? 0 : reasons.size() - 1) + 2;
}

/// Describes the first padding-invariant violation, or nullopt when `seq` is
/// well formed for `vocab`.
inline std::optional<std::string> check_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
  if (seq.ids.size() < 2) return "sequence shorter than 2 tokens";
  for (std::size_t i = 0; i < seq.ids.size(); ++i)
    if (seq.ids[i] >= vocab.size()) return "token id out of range at position " + std::to_string(i);
  if (seq.ids[0] != Vocabulary::kSos) return "first token is not <SOS>";
  bool seen_eos = false;
  for (std::size_t i = 1; i < seq.ids.size(); ++i) {
    const auto id = seq.ids[i];
    if (seen_eos) {
      if (id != Vocabulary::kNull) return "non-<NULL> token after <EOS> at position " + std::to_string(i);
    } else if (id == Vocabulary::kEos) {
      seen_eos = true;
    } else if (id == Vocabulary::kNull) {
      return "<NULL> before <EOS> at position " + std::to_string(i);
    } else if (id == Vocabulary::kSos) {
      return "<SOS> repeated at position " + std::to_string(i);
    }
  }
  if (!seen_eos) return "no <EOS>";
  return std::nullopt;
}

inline bool is_valid_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
  return !check_sequence(seq, vocab).has_value();
}

inline TokenSequence encode(std::span<const std::string> reasons, const Vocabulary& vocab,
                            std::size_t max_length) {
  TokenSequence seq;
  seq.ids.reserve(max_length);
  seq.ids.push_back(Vocabulary::kSos);
  for (std::size_t r = 0; r < reasons.size(); ++r) {
    const auto words = split_words(reasons[r]);
    if (words.empty()) fail(Errc::ParseError, "empty reason at position " + std::to_string(r));
    if (r > 0) seq.ids.push_back(Vocabulary::kDelim);
    for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  }
  seq.ids.push_back(Vocabulary::kEos);
  if (seq.ids.size() > max_length)
    fail(Errc::SentenceTooLong, "sentence needs " + std::to_string(seq.ids.size()) +
                                    " tokens, limit is " + std::to_string(max_length));
  seq.ids.resize(max_length, Vocabulary::kNull);
  return seq;
}

/// Body tokens (no <SOS>/<EOS>/<NULL>) joined by spaces; delimiters are kept.
inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (auto id : seq.ids) {
    const auto& w = vocab.word(id);
    if (id == Vocabulary::kSos || id == Vocabulary::kEos || id == Vocabulary::kNull) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

/// Reason phrases between delimiters. Empty segments are dropped.
inline std::vector<std::string> split_reasons(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> reasons;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) reasons.push_back(std::move(current));
    current.clear();
  };
  for (auto id : seq.ids) {
    const auto& w = vocab.word(id);
    if (id == Vocabulary::kSos || id == Vocabulary::kEos || id == Vocabulary::kNull) continue;
    if (id == Vocabulary::kDelim) {
      flush();
      continue;
    }
    if (!current.empty()) current += ' ';
    current += w;
  }
  flush();
  return reasons;
}

}  // namespace riattn
