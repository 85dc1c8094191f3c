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

// Attention-LSTM language decoder over a spatial feature map.
//
// Per timestep t, with X the s x f feature map and h the previous hidden state:
//
//   x        = X . W_attn                         (s x d, computed once)
//   A_t      = softmax(x . h / sqrt(d))           (s)
//   x_t      = A_t (row-broadcast) * x            (s x d)
//   context  = sum over rows of x_t               (d)
//   context *= sigmoid(h . W_gate + b_gate)       (only when the gate is on)
//   h, c     = LSTM([context, E[prev_token]], h, c)
//   logits   = h . W_out + b_out                  (V)
//
// Initial state: c = mean(X) . W_c + b_c, h = mean(X) . W_h0 + b_h0.
// Weight matrices are stored [in x out] and applied to row vectors.

#pragma once

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riattn/error.hpp"
#include "riattn/rng.hpp"
#include "riattn/tensor.hpp"
#include "riattn/tokenizer.hpp"

namespace riattn {

/// Encoder output: h x w cells of f channels, row-major (row, col, channel).
struct FeatureMap {
  std::size_t h = 0, w = 0, f = 0;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(std::size_t h_, std::size_t w_, std::size_t f_)
      : h(h_), w(w_), f(f_), values(h_ * w_ * f_, 0.0f) {}

  std::size_t cells() const noexcept { return h * w; }

  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return values[(row * w + col) * f + ch];
  }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return values[(row * w + col) * f + ch];
  }

  /// The s x f matrix the decoder consumes (s = h * w).
  Tensor flattened() const {
    if (h == 0 || w == 0 || f == 0 || values.size() != h * w * f)
      fail(Errc::ShapeMismatch, "feature map payload does not match " + std::to_string(h) + "x" +
                                    std::to_string(w) + "x" + std::to_string(f));
    return Tensor({cells(), f}, std::vector<real>(values.begin(), values.end()));
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct DecoderConfig {
  std::size_t h = 7, w = 7, f = 32;
  std::size_t d = 64;
  std::size_t vocab_size = 13;
  std::size_t max_length = kCanonicalMaxLength;
  bool gate_enabled = false;

  std::size_t cells() const noexcept { return h * w; }
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// All learned weights. Tensors alias on copy; use clone() for a replica.
struct DecoderParams {
  DecoderConfig config;
  Tensor attn_w;   // f x d, no bias
  Tensor embed;    // V x d
  Tensor lstm_wx;  // 2d x 4d, gate blocks [input, forget, cell, output]
  Tensor lstm_wh;  // d x 4d
  Tensor lstm_b;   // 4d
  Tensor out_w;    // d x V
  Tensor out_b;    // V
  Tensor init_c_w; // f x d
  Tensor init_c_b; // d
  Tensor init_h_w; // f x d
  Tensor init_h_b; // d
  Tensor gate_w;   // d x d
  Tensor gate_b;   // d

  /// Named views in checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named() {
    return {{"attn.w", &attn_w},     {"embed", &embed},       {"lstm.wx", &lstm_wx},
            {"lstm.wh", &lstm_wh},   {"lstm.b", &lstm_b},     {"out.w", &out_w},
            {"out.b", &out_b},       {"init_c.w", &init_c_w}, {"init_c.b", &init_c_b},
            {"init_h.w", &init_h_w}, {"init_h.b", &init_h_b}, {"gate.w", &gate_w},
            {"gate.b", &gate_b}};
  }
  std::vector<std::pair<std::string, const Tensor*>> named() const {
    auto views = const_cast<DecoderParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [n, t] : views) out.emplace_back(n, t);
    return out;
  }

  /// Expected shape of every named parameter for `cfg`.
  static std::vector<std::pair<std::string, Shape>> layout(const DecoderConfig& cfg) {
    const auto f = cfg.f, d = cfg.d, V = cfg.vocab_size;
    return {{"attn.w", {f, d}},   {"embed", {V, d}},    {"lstm.wx", {2 * d, 4 * d}},
            {"lstm.wh", {d, 4 * d}}, {"lstm.b", {4 * d}}, {"out.w", {d, V}},
            {"out.b", {V}},       {"init_c.w", {f, d}}, {"init_c.b", {d}},
            {"init_h.w", {f, d}}, {"init_h.b", {d}},    {"gate.w", {d, d}},
            {"gate.b", {d}}};
  }

  DecoderParams clone() const {
    DecoderParams p;
    p.config = config;
    auto dst = p.named();
    auto src = named();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].second = src[i].second->clone();
    return p;
  }

  void zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t->size();
    return n;
  }
};

namespace detail {

inline Tensor xavier(Shape shape, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  std::vector<real> v(numel(shape));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-bound, bound));
  return Tensor(std::move(shape), std::move(v), true);
}

inline void check_config(const DecoderConfig& c) {
  if (c.h == 0 || c.w == 0 || c.f == 0 || c.d == 0 || c.vocab_size < 4 || c.max_length < 2)
    fail(Errc::InvalidConfig, "decoder dimensions must be positive (V >= 4, T_max >= 2)");
}

}  // namespace detail

/// Embeddings ~ N(0, 1); weight matrices Xavier-uniform; biases zero except
/// the LSTM forget gate, which starts at 1.
inline DecoderParams init_params(const DecoderConfig& cfg, Rng& rng) {
  detail::check_config(cfg);
  const auto f = cfg.f, d = cfg.d, V = cfg.vocab_size;
  DecoderParams p;
  p.config = cfg;
  p.attn_w = detail::xavier({f, d}, rng);
  std::vector<real> emb(V * d);
  for (auto& x : emb) x = static_cast<real>(rng.normal());
  p.embed = Tensor({V, d}, std::move(emb), true);
  p.lstm_wx = detail::xavier({2 * d, 4 * d}, rng);
  p.lstm_wh = detail::xavier({d, 4 * d}, rng);
  std::vector<real> b(4 * d, real(0));
  std::fill(b.begin() + d, b.begin() + 2 * d, real(1));
  p.lstm_b = Tensor({4 * d}, std::move(b), true);
  p.out_w = detail::xavier({d, V}, rng);
  p.out_b = Tensor::zeros({V}, true);
  p.init_c_w = detail::xavier({f, d}, rng);
  p.init_c_b = Tensor::zeros({d}, true);
  p.init_h_w = detail::xavier({f, d}, rng);
  p.init_h_b = Tensor::zeros({d}, true);
  p.gate_w = detail::xavier({d, d}, rng);
  p.gate_b = Tensor::zeros({d}, true);
  return p;
}

struct DecoderState {
  Tensor h;
  Tensor c;
  std::size_t t = 0;
};

struct Attended {
  Tensor weights;  // A_t, length s
  Tensor context;  // length d
};

/// Per-timestep attention maps aligned with the tokens they produced:
/// maps[k] was used to emit tokens[k], which sits at sentence position k + 1.
struct AttentionTrace {
  std::size_t h = 0, w = 0;
  std::vector<std::vector<real>> maps;
  std::vector<TokenId> tokens;

  std::size_t size() const noexcept { return maps.size(); }
  bool empty() const noexcept { return maps.empty(); }
  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;
};

inline void check_features(const FeatureMap& X, const DecoderConfig& cfg) {
  if (X.h != cfg.h || X.w != cfg.w || X.f != cfg.f)
    fail(Errc::ShapeMismatch, "feature map " + std::to_string(X.h) + "x" + std::to_string(X.w) +
                                  "x" + std::to_string(X.f) + " does not match decoder " +
                                  std::to_string(cfg.h) + "x" + std::to_string(cfg.w) + "x" +
                                  std::to_string(cfg.f));
}

/// x = X . W_attn.
inline Tensor project_features(Graph& g, const Tensor& X, const DecoderParams& p) {
  if (X.rank() != 2 || X.dim(1) != p.config.f)
    fail(Errc::ShapeMismatch, "features " + to_string(X.shape()) + " vs f=" +
                                  std::to_string(p.config.f));
  return g.matmul(X, p.attn_w);
}

/// Scaled dot-product attention of h_prev over the rows of x, then the
/// attention-weighted row sum.
inline Attended attend(Graph& g, const Tensor& x, const Tensor& h_prev) {
  if (x.rank() != 2 || h_prev.rank() != 1 || x.dim(1) != h_prev.dim(0))
    fail(Errc::ShapeMismatch, "attend over " + to_string(x.shape()) + " with h " +
                                  to_string(h_prev.shape()));
  const real scale = std::sqrt(static_cast<real>(x.dim(1)));
  auto scores = g.matmul(x, h_prev);
  auto weights = g.softmax_scaled(scores, scale);
  auto rescaled = g.broadcast_mul(weights, x);
  return {weights, g.reduce_sum(rescaled, 0)};
}

/// sigmoid(h_prev . W_gate + b_gate).
inline Tensor input_gate(Graph& g, const Tensor& h_prev, const DecoderParams& p) {
  if (!p.config.gate_enabled) fail(Errc::GateDisabled, "input gate requested on an ungated decoder");
  return g.sigmoid(g.add(g.matmul(h_prev, p.gate_w), p.gate_b));
}

inline DecoderState init_state(Graph& g, const Tensor& X, const DecoderParams& p) {
  if (X.rank() != 2 || X.dim(1) != p.config.f)
    fail(Errc::ShapeMismatch, "features " + to_string(X.shape()) + " vs f=" +
                                  std::to_string(p.config.f));
  auto m = g.reduce_mean(X, 0);
  DecoderState s;
  s.c = g.add(g.matmul(m, p.init_c_w), p.init_c_b);
  s.h = g.add(g.matmul(m, p.init_h_w), p.init_h_b);
  s.t = 0;
  return s;
}

struct StepResult {
  DecoderState state;
  Tensor logits;     // V, raw scores
  Tensor attention;  // A_t
  Tensor attended;   // context before gating
  Tensor context;    // context fed to the LSTM (gated when enabled)
};

inline StepResult step(Graph& g, const DecoderState& state, const Tensor& projected,
                       TokenId prev_token, const DecoderParams& p) {
  const auto d = p.config.d;
  if (prev_token >= p.config.vocab_size)
    fail(Errc::IndexOutOfRange, "previous token " + std::to_string(prev_token) + " >= V");
  if (state.t + 1 >= p.config.max_length)
    fail(Errc::StepOverflow, "no sentence position left after t=" + std::to_string(state.t));

  auto att = attend(g, projected, state.h);
  Tensor context = att.context;
  if (p.config.gate_enabled) context = g.mul(input_gate(g, state.h, p), context);

  auto input = g.concat(context, g.embed_lookup(p.embed, prev_token), 0);
  auto z = g.add(g.add(g.matmul(input, p.lstm_wx), g.matmul(state.h, p.lstm_wh)), p.lstm_b);
  auto in_gate = g.sigmoid(g.slice(z, 0, d));
  auto forget = g.sigmoid(g.slice(z, d, d));
  auto cand = g.tanh(g.slice(z, 2 * d, d));
  auto out_gate = g.sigmoid(g.slice(z, 3 * d, d));
  auto c = g.add(g.mul(forget, state.c), g.mul(in_gate, cand));
  auto h = g.mul(out_gate, g.tanh(c));
  auto logits = g.add(g.matmul(h, p.out_w), p.out_b);

  return {DecoderState{h, c, state.t + 1}, logits, att.weights, att.context, context};
}

namespace detail {
inline TokenId argmax(std::span<const real> v) {
  return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}
}  // namespace detail

/// Greedy generation from <SOS>. Positions after the first <EOS> are filled
/// with <NULL> without running the model.
inline std::pair<TokenSequence, AttentionTrace> decode_greedy(const FeatureMap& features,
                                                              const DecoderParams& p) {
  check_features(features, p.config);
  auto g = Graph::no_grad();
  const auto X = features.flattened();
  const auto x = project_features(g, X, p);
  auto state = init_state(g, X, p);

  TokenSequence seq;
  seq.ids.assign(p.config.max_length, Vocabulary::kNull);
  seq.ids[0] = Vocabulary::kSos;
  AttentionTrace trace{p.config.h, p.config.w, {}, {}};

  TokenId prev = Vocabulary::kSos;
  for (std::size_t pos = 1; pos < p.config.max_length; ++pos) {
    // The last slot must close the sentence.
    if (pos + 1 == p.config.max_length) {
      auto r = step(g, state, x, prev, p);
      trace.maps.emplace_back(r.attention.data().begin(), r.attention.data().end());
      trace.tokens.push_back(Vocabulary::kEos);
      seq.ids[pos] = Vocabulary::kEos;
      break;
    }
    auto r = step(g, state, x, prev, p);
    auto scores = r.logits.data();
    // <SOS> and <NULL> are never valid mid-sentence emissions.
    std::vector<real> masked(scores.begin(), scores.end());
    masked[Vocabulary::kSos] = -std::numeric_limits<real>::infinity();
    masked[Vocabulary::kNull] = -std::numeric_limits<real>::infinity();
    const TokenId tok = detail::argmax(masked);
    trace.maps.emplace_back(r.attention.data().begin(), r.attention.data().end());
    trace.tokens.push_back(tok);
    seq.ids[pos] = tok;
    if (tok == Vocabulary::kEos) break;
    state = std::move(r.state);
    prev = tok;
  }
  return {std::move(seq), std::move(trace)};
}

struct TeacherForced {
  Tensor logits;  // (T_max - 1) x V
  AttentionTrace trace;
};

/// Unrolls the decoder over `target`, feeding target[t-1] at step t.
inline TeacherForced forward_teacher_forced(Graph& g, const FeatureMap& features,
                                            const TokenSequence& target, const DecoderParams& p) {
  check_features(features, p.config);
  if (target.ids.size() != p.config.max_length)
    fail(Errc::ShapeMismatch, "target length " + std::to_string(target.ids.size()) +
                                  " != T_max " + std::to_string(p.config.max_length));
  const auto X = features.flattened();
  const auto x = project_features(g, X, p);
  auto state = init_state(g, X, p);
  std::vector<Tensor> rows;
  rows.reserve(target.ids.size() - 1);
  AttentionTrace trace{p.config.h, p.config.w, {}, {}};
  for (std::size_t pos = 1; pos < target.ids.size(); ++pos) {
    auto r = step(g, state, x, target.ids[pos - 1], p);
    rows.push_back(r.logits);
    trace.maps.emplace_back(r.attention.data().begin(), r.attention.data().end());
    trace.tokens.push_back(target.ids[pos]);
    state = std::move(r.state);
  }
  return {g.stack_rows(rows), std::move(trace)};
}

}  // namespace riattn
