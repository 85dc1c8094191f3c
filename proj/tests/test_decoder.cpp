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

#include <cmath>

#include "oracles.hpp"
#include "riattn/decoder.hpp"
#include "riattn/training.hpp"

using namespace riattn;

namespace {

double tiny_loss(DecoderParams& p, const oracle::TinyProblem& tp, bool backward) {
  Graph g(backward);
  auto tf = forward_teacher_forced(g, tp.features, tp.target, p);
  auto loss = temporal_cross_entropy(g, tf.logits, tp.target, LossMask::None);
  if (backward) g.backward(loss);
  return loss.item();
}

}  // namespace

TEST(Decoder, ParameterLayout) {
  DecoderConfig cfg;
  Rng rng(1);
  auto p = init_params(cfg, rng);
  for (const auto& [name, shape] : DecoderParams::layout(cfg)) {
    bool found = false;
    for (const auto& [n, t] : p.named())
      if (n == name) {
        EXPECT_EQ(t->shape(), shape) << name;
        found = true;
      }
    EXPECT_TRUE(found) << name;
  }
  // forget-gate block of the LSTM bias starts at 1
  for (std::size_t i = 0; i < 4 * cfg.d; ++i)
    EXPECT_EQ(p.lstm_b.data()[i], (i >= cfg.d && i < 2 * cfg.d) ? 1 : 0);
  EXPECT_GT(p.parameter_count(), 0u);
}

TEST(Decoder, InitIsSeeded) {
  DecoderConfig cfg;
  Rng a(5), b(5), c(6);
  auto pa = init_params(cfg, a), pb = init_params(cfg, b), pc = init_params(cfg, c);
  EXPECT_TRUE(std::equal(pa.lstm_wx.data().begin(), pa.lstm_wx.data().end(), pb.lstm_wx.data().begin()));
  EXPECT_FALSE(std::equal(pa.lstm_wx.data().begin(), pa.lstm_wx.data().end(), pc.lstm_wx.data().begin()));
}

TEST(Decoder, AttentionIsADistribution) {
  auto tp = oracle::tiny_problem(false);
  Graph g;
  const auto X = tp.features.flattened();
  auto x = project_features(g, X, tp.params);
  auto state = init_state(g, X, tp.params);
  auto r = step(g, state, x, Vocabulary::kSos, tp.params);
  double total = 0;
  for (auto a : r.attention.data()) {
    EXPECT_GT(a, 0);
    total += a;
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
  EXPECT_EQ(r.logits.shape(), (Shape{6}));
  EXPECT_EQ(r.state.t, 1u);
}

TEST(Decoder, ZeroProjectionGivesUniformAttention) {
  auto tp = oracle::tiny_problem(false);
  for (auto& v : tp.params.attn_w.mutable_data()) v = 0;
  Graph g;
  const auto X = tp.features.flattened();
  auto x = project_features(g, X, tp.params);
  auto r = step(g, init_state(g, X, tp.params), x, Vocabulary::kSos, tp.params);
  for (auto a : r.attention.data()) EXPECT_NEAR(a, 0.25, 1e-15);
}

TEST(Decoder, StepHandValue) {
  // With every weight zero the LSTM state stays 0 and logits equal out.b.
  auto tp = oracle::tiny_problem(false);
  for (auto& [name, t] : tp.params.named())
    for (auto& v : t->mutable_data()) v = 0;
  tp.params.out_b.mutable_data()[2] = 1.5;
  Graph g;
  const auto X = tp.features.flattened();
  auto r = step(g, init_state(g, X, tp.params), project_features(g, X, tp.params), 0, tp.params);
  for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(r.logits.data()[v], v == 2 ? 1.5 : 0);
  // c = f*c0 + i*g = 0.5*0 + 0.5*tanh(0)
  for (auto c : r.state.c.data()) EXPECT_EQ(c, 0);
}

TEST(Decoder, StepOverflow) {
  auto tp = oracle::tiny_problem(false);
  Graph g;
  const auto X = tp.features.flattened();
  auto x = project_features(g, X, tp.params);
  auto s = init_state(g, X, tp.params);
  s.t = 4;  // T_max = 5: positions 1..4 are the only ones a step can fill
  try {
    step(g, s, x, 0, tp.params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StepOverflow);
  }
}

TEST(Decoder, FeatureShapeChecked) {
  auto tp = oracle::tiny_problem(false);
  FeatureMap wrong(2, 2, 4);
  EXPECT_THROW(decode_greedy(wrong, tp.params), Error);
}

TEST(Decoder, GateDisabledIsAnError) {
  auto tp = oracle::tiny_problem(false);
  Graph g;
  try {
    input_gate(g, Tensor::zeros({3}), tp.params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GateDisabled);
  }
}

TEST(Decoder, ZeroGateHalvesContext) {
  auto tp = oracle::tiny_problem(true);
  for (auto& v : tp.params.gate_w.mutable_data()) v = 0;
  for (auto& v : tp.params.gate_b.mutable_data()) v = 0;
  Graph g;
  const auto X = tp.features.flattened();
  auto x = project_features(g, X, tp.params);
  auto s = init_state(g, X, tp.params);
  TokenId prev = 0;
  for (int k = 0; k < 4; ++k) {
    auto r = step(g, s, x, prev, tp.params);
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(r.context.data()[j], 0.5 * r.attended.data()[j], 1e-15);
    s = r.state;
    prev = tp.target.ids[k + 1];
  }
}

TEST(Decoder, GreedyOutputIsWellFormed) {
  DecoderConfig cfg{7, 7, 32, 16, 13, 37, false};
  Rng rng(11);
  auto p = init_params(cfg, rng);
  FeatureMap X(7, 7, 32);
  for (auto& v : X.values) v = static_cast<float>(rng.normal());
  const auto [seq, trace] = decode_greedy(X, p);
  EXPECT_TRUE(is_valid_sequence(seq, Vocabulary::canonical()));
  ASSERT_FALSE(trace.empty());
  EXPECT_EQ(trace.tokens.back(), Vocabulary::kEos);
  EXPECT_EQ(trace.maps.size(), trace.tokens.size());
  for (std::size_t k = 0; k < trace.size(); ++k) EXPECT_EQ(trace.tokens[k], seq.ids[k + 1]);
  EXPECT_EQ(trace.h, 7u);
  EXPECT_EQ(trace.maps[0].size(), 49u);
}

TEST(Decoder, TeacherForcedShapes) {
  auto tp = oracle::tiny_problem(false);
  Graph g;
  auto tf = forward_teacher_forced(g, tp.features, tp.target, tp.params);
  EXPECT_EQ(tf.logits.shape(), (Shape{4, 6}));
  EXPECT_EQ(tf.trace.size(), 4u);
  TokenSequence short_target{{0, 1}};
  EXPECT_THROW(forward_teacher_forced(g, tp.features, short_target, tp.params), Error);
}

TEST(Decoder, FiniteDifferenceUngated) {
  auto tp = oracle::tiny_problem(false);
  auto r = oracle::check_decoder_gradients(
      tp.params, [&](DecoderParams& p, bool bw) { return tiny_loss(p, tp, bw); });
  EXPECT_LE(r.max_rel, 1e-3) << r.worst;
  // gate weights are unused without the gate, so their gradients stay zero
  for (auto g : tp.params.gate_w.grad()) EXPECT_EQ(g, 0);
}

TEST(Decoder, FiniteDifferenceGated) {
  auto tp = oracle::tiny_problem(true);
  auto r = oracle::check_decoder_gradients(
      tp.params, [&](DecoderParams& p, bool bw) { return tiny_loss(p, tp, bw); });
  EXPECT_LE(r.max_rel, 1e-3) << r.worst;
  double gate_norm = 0;
  for (auto g : tp.params.gate_w.grad()) gate_norm += std::abs(g);
  EXPECT_GT(gate_norm, 0);
}
