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

// Planted-signal driving scenes.
//
// Each reason class c owns channel c. An active left-side reason (0-2) adds
// `amplitude` to its channel over every row of the left band, a right-side
// reason (3-5) over the right band. Band width is floor(w/2) columns from
// each edge; for odd w the middle column belongs to neither side. All
// channels carry N(0, noise_sigma^2) noise.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/evaluation.hpp"
#include "riattn/rng.hpp"
#include "riattn/tokenizer.hpp"
#include "riattn/training.hpp"

namespace riattn {

struct SceneSpec {
  std::size_t h = 7, w = 7, f = 32;
  double amplitude = 1.0;
  double noise_sigma = 0.1;
  double reason_prob = 0.35;

  void validate() const {
    if (h == 0) fail(Errc::InvalidSpec, "h must be positive");
    if (w < 3) fail(Errc::InvalidSpec, "w must be at least 3 to separate left from right");
    if (f < kNumReasons) fail(Errc::InvalidSpec, "need at least 6 channels, one per reason");
    if (!(reason_prob > 0 && reason_prob < 1)) fail(Errc::InvalidSpec, "reason_prob must lie in (0, 1)");
    if (!(noise_sigma >= 0)) fail(Errc::InvalidSpec, "noise_sigma must be >= 0");
  }
};

/// First and one-past-last column of the band a reason class is planted in.
inline std::pair<std::size_t, std::size_t> band_columns(std::size_t reason, std::size_t w) {
  const std::size_t width = w / 2;
  return reason < 3 ? std::pair{std::size_t{0}, width} : std::pair{w - width, w};
}

/// Flattened cell indices (row * w + col) of the band for `reason`.
inline std::vector<std::size_t> band_cells(std::size_t reason, std::size_t h, std::size_t w) {
  const auto [lo, hi] = band_columns(reason, w);
  std::vector<std::size_t> cells;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = lo; c < hi; ++c) cells.push_back(r * w + c);
  return cells;
}

struct SyntheticScene {
  std::string id;
  FeatureMap features;
  ReasonSet annotation;
  TokenSequence target;
  std::array<std::vector<std::size_t>, kNumReasons> masks;  // empty for inactive reasons

  Example example() const { return {features, target}; }
};

/// Draws a scene; `forced` overrides the per-class coin flips.
inline SyntheticScene generate_scene(const SceneSpec& spec, Rng& rng,
                                     std::optional<ReasonSet> forced = std::nullopt) {
  spec.validate();
  static const Vocabulary vocab = Vocabulary::canonical();
  SyntheticScene scene;
  ReasonSet reasons;
  for (std::size_t c = 0; c < kNumReasons; ++c) reasons.set(c, rng.bernoulli(spec.reason_prob));
  if (forced) reasons = *forced;
  scene.annotation = reasons;

  scene.features = FeatureMap(spec.h, spec.w, spec.f);
  if (spec.noise_sigma > 0)
    for (auto& v : scene.features.values) v = static_cast<float>(spec.noise_sigma * rng.normal());
  for (std::size_t c = 0; c < kNumReasons; ++c) {
    if (!reasons.test(c)) continue;
    scene.masks[c] = band_cells(c, spec.h, spec.w);
    for (auto cell : scene.masks[c])
      scene.features.values[cell * spec.f + c] += static_cast<float>(spec.amplitude);
  }
  scene.target = encode(reason_strings(reasons), vocab, kCanonicalMaxLength);
  return scene;
}

inline std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene-%06zu", index);
  return buf;
}

/// Scene i is drawn from Rng(seed).split(i), so any index can be regenerated
/// on its own.
inline std::vector<SyntheticScene> generate_dataset(const SceneSpec& spec, std::size_t n,
                                                    std::uint64_t seed) {
  spec.validate();
  if (n == 0) fail(Errc::InvalidSpec, "dataset size must be at least 1");
  const Rng root(seed);
  std::vector<SyntheticScene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.split(i);
    scenes.push_back(generate_scene(spec, rng));
    scenes.back().id = scene_id(i);
  }
  return scenes;
}

inline std::vector<Example> to_examples(const std::vector<SyntheticScene>& scenes) {
  std::vector<Example> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.example());
  return out;
}

struct ReasonAlignment {
  std::size_t reason = 0;
  bool found = false;           // false: the reason was not generated (SegmentNotFound)
  std::size_t timesteps = 0;    // words of the reason's segment
  double ratio = 0;             // mean in-mask mass / (|mask| / s)
};

/// Attention mass of one map inside `mask`, relative to the mask's share of
/// the cells. 1 means indifferent, s/|mask| means all mass inside.
inline double mask_ratio(std::span<const real> map, std::span<const std::size_t> mask) {
  double inside = 0;
  for (auto cell : mask) inside += map[cell];
  return inside * static_cast<double>(map.size()) / static_cast<double>(mask.size());
}

/// Alignment of the attention used while emitting each active reason's words
/// with that reason's planted cells.
inline std::vector<ReasonAlignment> attention_alignment(const AttentionTrace& trace,
                                                        const SyntheticScene& scene,
                                                        const Vocabulary& vocab) {
  if (scene.annotation.none()) fail(Errc::NoActiveReasons, "scene " + scene.id + " has no reasons");
  if (trace.maps.size() != trace.tokens.size())
    fail(Errc::ShapeMismatch, "trace maps and tokens differ in length");

  // Segments of the emitted body with the trace steps that produced them.
  struct Segment {
    std::string text;
    std::vector<std::size_t> steps;
  };
  std::vector<Segment> segments(1);
  for (std::size_t k = 0; k < trace.tokens.size(); ++k) {
    const auto tok = trace.tokens[k];
    if (tok == Vocabulary::kEos) break;
    if (tok == Vocabulary::kDelim) {
      segments.emplace_back();
      continue;
    }
    if (Vocabulary::is_special(tok)) continue;
    auto& seg = segments.back();
    if (!seg.text.empty()) seg.text += ' ';
    seg.text += vocab.word(tok);
    seg.steps.push_back(k);
  }

  std::vector<ReasonAlignment> out;
  for (std::size_t c = 0; c < kNumReasons; ++c) {
    if (!scene.annotation.test(c)) continue;
    ReasonAlignment a;
    a.reason = c;
    for (const auto& seg : segments) {
      if (seg.text != kCanonicalReasons[c]) continue;
      double sum = 0;
      for (auto k : seg.steps) sum += mask_ratio(trace.maps[k], scene.masks[c]);
      a.found = true;
      a.timesteps = seg.steps.size();
      a.ratio = sum / static_cast<double>(seg.steps.size());
      break;
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace riattn
