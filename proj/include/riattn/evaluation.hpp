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
#include <bitset>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/tokenizer.hpp"
#include "riattn/training.hpp"

namespace riattn {

// ---------------------------------------------------------------------------
// BLEU

/// Sentence-level cumulative BLEU with uniform weights up to order
/// min(max_order, |hyp|). Clipped n-gram precisions; for n >= 2 a zero
/// clipped count is smoothed to (0 + 1) / (total + 1). Brevity penalty
/// exp(1 - r/h) when the hypothesis is shorter than the reference.
/// An empty hypothesis scores 0.
template <class Token>
double bleu(std::span<const Token> hyp, std::span<const Token> ref, std::size_t max_order = 4) {
  if (ref.empty()) fail(Errc::EmptyReference, "BLEU reference has no tokens");
  if (hyp.empty()) return 0.0;
  const std::size_t order = std::min(max_order, hyp.size());

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= order; ++n) {
    std::map<std::vector<Token>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<Token>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<Token>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[std::vector<Token>(hyp.begin() + i, hyp.begin() + i + n)];

    std::size_t clipped = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    const std::size_t total = hyp.size() - n + 1;
    if (clipped == 0) {
      if (n == 1) return 0.0;
      log_sum += std::log(1.0 / static_cast<double>(total + 1));
    } else {
      log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }
  }
  const double h = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = h < r ? std::exp(1.0 - r / h) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(order));
}

/// Sentence body as scored by BLEU: <SOS>/<EOS>/<NULL> removed, <;> kept.
inline std::vector<TokenId> bleu_tokens(const TokenSequence& seq) {
  std::vector<TokenId> out;
  for (auto id : seq.ids)
    if (id != Vocabulary::kSos && id != Vocabulary::kEos && id != Vocabulary::kNull)
      out.push_back(id);
  return out;
}

/// BLEU between two token sequences. A reference with no reasons has an
/// empty body; the pair then scores 1 when the hypothesis is empty too and 0
/// otherwise.
inline double sentence_bleu(const TokenSequence& hyp, const TokenSequence& ref) {
  const auto h = bleu_tokens(hyp);
  const auto r = bleu_tokens(ref);
  if (r.empty()) return h.empty() ? 1.0 : 0.0;
  return bleu<TokenId>(h, r);
}

// ---------------------------------------------------------------------------
// Reasons and actions

/// Bit c set <=> canonical reason c present.
using ReasonSet = std::bitset<kNumReasons>;

inline constexpr std::size_t kNumActions = 2;

/// Bit 0: cannot turn left; bit 1: cannot turn right.
using ActionSet = std::bitset<kNumActions>;

inline ReasonSet make_reason_set(std::initializer_list<std::size_t> classes) {
  ReasonSet s;
  for (auto c : classes) s.set(c);
  return s;
}

inline std::vector<std::string> reason_strings(const ReasonSet& s) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kNumReasons; ++c)
    if (s.test(c)) out.emplace_back(kCanonicalReasons[c]);
  return out;
}

/// Canonical index of `phrase` after whitespace/case normalisation, or -1.
inline int canonical_index(std::string_view phrase) {
  const auto norm = normalize_phrase(phrase);
  for (std::size_t c = 0; c < kNumReasons; ++c)
    if (norm == kCanonicalReasons[c]) return static_cast<int>(c);
  return -1;
}

/// Exact-match segments of a generated sentence against the canonical
/// reasons; segments that match nothing are ignored.
inline ReasonSet extract_reason_set(const TokenSequence& generated, const Vocabulary& vocab) {
  ReasonSet s;
  for (const auto& seg : split_reasons(generated, vocab)) {
    const int c = canonical_index(seg);
    if (c >= 0) s.set(static_cast<std::size_t>(c));
  }
  return s;
}

/// Any of reasons 0-2 forbids turning left; any of 3-5 forbids turning right.
inline ActionSet derive_actions(const ReasonSet& reasons) {
  ActionSet a;
  a.set(0, reasons.test(0) || reasons.test(1) || reasons.test(2));
  a.set(1, reasons.test(3) || reasons.test(4) || reasons.test(5));
  return a;
}

inline std::vector<std::string> action_strings(const ActionSet& a) {
  std::vector<std::string> out;
  if (a.test(0)) out.emplace_back("cannot turn left");
  if (a.test(1)) out.emplace_back("cannot turn right");
  return out;
}

// ---------------------------------------------------------------------------
// F1

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;

  /// 2tp / (2tp + fp + fn); 1 when there is nothing to find and nothing found.
  double f1() const {
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  bool empty() const { return tp + fp + fn == 0; }
};

template <std::size_t N>
Confusion confusion(const std::bitset<N>& pred, const std::bitset<N>& label) {
  return {(pred & label).count(), (pred & ~label).count(), (~pred & label).count()};
}

namespace detail {
template <std::size_t N>
void check_pairs(std::span<const std::bitset<N>> pred, std::span<const std::bitset<N>> label) {
  if (pred.size() != label.size())
    fail(Errc::LengthMismatch, std::to_string(pred.size()) + " predictions vs " +
                                   std::to_string(label.size()) + " labels");
  if (pred.empty()) fail(Errc::EmptyInput, "no predictions to score");
}
}  // namespace detail

enum class F1Averaging {
  Samples,  // mean over examples of each example's F1 (default)
  Micro,    // one F1 over all (example, class) decisions
};

/// Overall F1 over multi-label predictions.
template <std::size_t N>
double f1_all(std::span<const std::bitset<N>> pred, std::span<const std::bitset<N>> label,
              F1Averaging averaging = F1Averaging::Samples) {
  detail::check_pairs(pred, label);
  if (averaging == F1Averaging::Micro) {
    Confusion total;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      auto c = confusion(pred[j], label[j]);
      total.tp += c.tp;
      total.fp += c.fp;
      total.fn += c.fn;
    }
    return total.f1();
  }
  double sum = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) sum += confusion(pred[j], label[j]).f1();
  return sum / static_cast<double>(pred.size());
}

template <std::size_t N>
struct ClassF1 {
  std::array<double, N> per_class{};
  std::array<Confusion, N> counts{};
  std::size_t absent_classes = 0;  // classes scored 1 by the empty convention
  double mean = 0;
};

/// Per-class F1 from counts pooled over examples, and their mean.
template <std::size_t N>
ClassF1<N> mf1(std::span<const std::bitset<N>> pred, std::span<const std::bitset<N>> label) {
  detail::check_pairs(pred, label);
  ClassF1<N> out;
  for (std::size_t j = 0; j < pred.size(); ++j)
    for (std::size_t c = 0; c < N; ++c) {
      const bool p = pred[j].test(c), l = label[j].test(c);
      if (p && l) ++out.counts[c].tp;
      if (p && !l) ++out.counts[c].fp;
      if (!p && l) ++out.counts[c].fn;
    }
  double sum = 0;
  for (std::size_t c = 0; c < N; ++c) {
    out.per_class[c] = out.counts[c].f1();
    if (out.counts[c].empty()) ++out.absent_classes;
    sum += out.per_class[c];
  }
  out.mean = sum / static_cast<double>(N);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct MetricsReport {
  std::size_t count = 0;
  double avg_bleu = 0;
  double reasons_f1_all = 0;
  double reasons_mf1 = 0;
  double actions_f1_all = 0;
  double actions_mf1 = 0;
  double reasons_f1_micro = 0;
  double actions_f1_micro = 0;
  std::array<double, kNumReasons> reasons_per_class{};
  std::array<double, kNumActions> actions_per_class{};
  std::size_t empty_empty_reasons = 0;  // examples scored 1 by the empty convention
  std::size_t empty_empty_actions = 0;
  std::size_t absent_reason_classes = 0;
  std::size_t absent_action_classes = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Scores generated sentences against reference sentences.
inline MetricsReport evaluate_predictions(std::span<const TokenSequence> generated,
                                          std::span<const TokenSequence> references,
                                          const Vocabulary& vocab) {
  if (generated.size() != references.size())
    fail(Errc::LengthMismatch, "generated and reference counts differ");
  if (generated.empty()) fail(Errc::EmptyInput, "nothing to evaluate");
  MetricsReport r;
  r.count = generated.size();
  std::vector<ReasonSet> pred_r, label_r;
  std::vector<ActionSet> pred_a, label_a;
  double bleu_sum = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    bleu_sum += sentence_bleu(generated[i], references[i]);
    pred_r.push_back(extract_reason_set(generated[i], vocab));
    label_r.push_back(extract_reason_set(references[i], vocab));
    pred_a.push_back(derive_actions(pred_r.back()));
    label_a.push_back(derive_actions(label_r.back()));
    if (pred_r.back().none() && label_r.back().none()) ++r.empty_empty_reasons;
    if (pred_a.back().none() && label_a.back().none()) ++r.empty_empty_actions;
  }
  r.avg_bleu = bleu_sum / static_cast<double>(r.count);
  r.reasons_f1_all = f1_all<kNumReasons>(pred_r, label_r);
  r.reasons_f1_micro = f1_all<kNumReasons>(pred_r, label_r, F1Averaging::Micro);
  r.actions_f1_all = f1_all<kNumActions>(pred_a, label_a);
  r.actions_f1_micro = f1_all<kNumActions>(pred_a, label_a, F1Averaging::Micro);
  const auto rc = mf1<kNumReasons>(pred_r, label_r);
  const auto ac = mf1<kNumActions>(pred_a, label_a);
  r.reasons_mf1 = rc.mean;
  r.actions_mf1 = ac.mean;
  r.reasons_per_class = rc.per_class;
  r.actions_per_class = ac.per_class;
  r.absent_reason_classes = rc.absent_classes;
  r.absent_action_classes = ac.absent_classes;
  return r;
}

/// Greedy-decodes every example on up to `threads` workers, in example order.
inline std::vector<std::pair<TokenSequence, AttentionTrace>> decode_all(
    const DecoderParams& params, std::span<const Example> data, std::size_t threads = 1) {
  std::vector<std::pair<TokenSequence, AttentionTrace>> out(data.size());
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t i = worker; i < data.size(); i += stride)
      out[i] = decode_greedy(data[i].features, params);
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, data.size()));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline MetricsReport evaluate_dataset(const DecoderParams& params, std::span<const Example> data,
                                      const Vocabulary& vocab, std::size_t threads = 1) {
  if (data.empty()) fail(Errc::EmptyInput, "nothing to evaluate");
  auto decoded = decode_all(params, data, threads);
  std::vector<TokenSequence> gen, ref;
  for (std::size_t i = 0; i < data.size(); ++i) {
    gen.push_back(std::move(decoded[i].first));
    ref.push_back(data[i].target);
  }
  return evaluate_predictions(gen, ref, vocab);
}

}  // namespace riattn
