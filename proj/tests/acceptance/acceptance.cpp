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

// Acceptance gate. Prints one PASS/FAIL line per criterion; exits 1 if any
// fails. Arguments, if given, select criteria by number (7 implies 2-4).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "riattn/riattn.hpp"

using namespace riattn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d [%s] %s: %s\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

void gradient_integrity() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  bool all_groups_live = true;
  for (bool gate : {false, true}) {
    auto tp = oracle::tiny_problem(gate);
    auto loss = [&](DecoderParams& p, bool bw) {
      Graph g(bw);
      auto tf = forward_teacher_forced(g, tp.features, tp.target, p);
      auto L = temporal_cross_entropy(g, tf.logits, tp.target, LossMask::None);
      if (bw) g.backward(L);
      return double(L.item());
    };
    const auto r = oracle::check_decoder_gradients(tp.params, loss);
    checked += r.checked;
    if (r.max_rel > worst) {
      worst = r.max_rel;
      where = r.worst + (gate ? " (gated)" : "");
    }
    for (const auto& [name, t] : tp.params.named()) {
      if (!gate && name.starts_with("gate")) continue;
      double norm = 0;
      for (auto g : t->grad()) norm += std::abs(g);
      if (norm == 0) all_groups_live = false;
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient integrity", worst <= 1e-3 && all_groups_live && secs < 60,
         fmt("max relative error %.3g at %s over %zu coordinates, all groups non-zero: %s, %.1f s",
             worst, where.c_str(), checked, all_groups_live ? "yes" : "no", secs));
}

// ---------------------------------------------------------------------------
// 2-4. training runs

struct OverfitRun {
  std::vector<unsigned char> checkpoint;
  std::string report_json;
  double final_loss = 0;
  double exact = 0;
  double avg_bleu = 0;
  std::size_t epochs = 0;
  double seconds = 0;
};

OverfitRun overfit_run() {
  const auto t0 = Clock::now();
  const auto scenes = generate_dataset(SceneSpec{}, 64, 1);
  const auto data = to_examples(scenes);
  TrainConfig cfg;
  cfg.d = 64;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.epochs = 120;
  cfg.seed = 11;
  auto [params, rep] = fit(data, cfg, 13);
  OverfitRun out;
  out.checkpoint = encode_checkpoint(params);
  rep.checkpoint_id = checkpoint_id(out.checkpoint);
  out.report_json = train_report_json(rep).dump();
  out.final_loss = rep.epoch_loss.back();
  out.epochs = rep.epoch_loss.size();
  const auto decoded = decode_all(params, data);
  std::size_t exact = 0;
  double bleu_sum = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (decoded[i].first == data[i].target) ++exact;
    bleu_sum += sentence_bleu(decoded[i].first, data[i].target);
  }
  out.exact = double(exact) / double(data.size());
  out.avg_bleu = bleu_sum / double(data.size());
  out.seconds = seconds_since(t0);
  return out;
}

struct GeneralizationRun {
  std::vector<unsigned char> checkpoint;
  std::string report_json;
  std::string metrics_json;
  MetricsReport metrics;
  std::string alignment_json;
  double mean_alignment = 0;
  std::array<double, kNumReasons> class_alignment{};
  std::array<std::size_t, kNumReasons> class_count{};
  std::size_t single_scenes = 0;
  std::size_t not_found = 0;
  double seconds = 0;
};

GeneralizationRun generalization_run() {
  const auto t0 = Clock::now();
  const SceneSpec spec;
  const auto train = generate_dataset(spec, 2000, 1);
  const auto test = generate_dataset(spec, 500, 2);
  TrainConfig cfg;
  cfg.d = 32;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 32;
  cfg.epochs = 15;
  cfg.seed = 12;
  auto [params, rep] = fit(to_examples(train), cfg, 13);
  GeneralizationRun out;
  out.checkpoint = encode_checkpoint(params);
  rep.checkpoint_id = checkpoint_id(out.checkpoint);
  out.report_json = train_report_json(rep).dump();

  const auto vocab = Vocabulary::canonical();
  const auto examples = to_examples(test);
  const auto decoded = decode_all(params, examples);
  std::vector<TokenSequence> gen, ref;
  for (std::size_t i = 0; i < test.size(); ++i) {
    gen.push_back(decoded[i].first);
    ref.push_back(test[i].target);
  }
  out.metrics = evaluate_predictions(gen, ref, vocab);
  out.metrics_json = metrics_json(out.metrics).dump();

  // 4: single-reason test scenes
  double total = 0;
  std::size_t counted = 0;
  nlohmann::ordered_json per_scene = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].annotation.count() != 1) continue;
    ++out.single_scenes;
    for (const auto& a : attention_alignment(decoded[i].second, test[i], vocab)) {
      if (!a.found) {
        ++out.not_found;
        continue;
      }
      total += a.ratio;
      ++counted;
      out.class_alignment[a.reason] += a.ratio;
      ++out.class_count[a.reason];
      per_scene.push_back({{"id", test[i].id}, {"reason", a.reason}, {"ratio", a.ratio}});
    }
  }
  out.mean_alignment = counted ? total / double(counted) : 0.0;
  for (std::size_t c = 0; c < kNumReasons; ++c)
    if (out.class_count[c]) out.class_alignment[c] /= double(out.class_count[c]);
  out.alignment_json = per_scene.dump();
  out.seconds = seconds_since(t0);
  return out;
}

void check_overfit(const OverfitRun& r) {
  report(2, "overfit oracle",
         r.exact >= 0.95 && r.avg_bleu >= 0.95 && r.final_loss < 0.05 && r.epochs <= 500 && r.seconds <= 600,
         fmt("exact %.1f%%, train BLEU %.4f, final loss %.4f after %zu epochs, %.0f s", 100 * r.exact,
             r.avg_bleu, r.final_loss, r.epochs, r.seconds));
}

void check_generalization(const GeneralizationRun& r) {
  const auto& m = r.metrics;
  report(3, "generalization smoke",
         m.reasons_mf1 >= 0.90 && m.actions_f1_all >= 0.95 && r.seconds <= 1800,
         fmt("test reasons mF1 %.4f, actions F1_all %.4f (reasons F1_all %.4f, BLEU %.4f), %.0f s",
             m.reasons_mf1, m.actions_f1_all, m.reasons_f1_all, m.avg_bleu, r.seconds));
  std::string classes;
  for (std::size_t c = 0; c < kNumReasons; ++c)
    classes += fmt("%s%zu:%.3f(n=%zu)", c ? " " : "", c, r.class_alignment[c], r.class_count[c]);
  report(4, "attention alignment", r.mean_alignment >= 2.0,
         fmt("mean ratio %.3f over %zu single-reason scenes (%zu segments not generated); per class %s",
             r.mean_alignment, r.single_scenes, r.not_found, classes.c_str()));
}

// ---------------------------------------------------------------------------
// 5. metric oracles

void metric_oracles() {
  Rng rng(5);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    auto draw = [&] {
      std::vector<int> s(1 + rng.below(10));
      for (auto& t : s) t = int(rng.below(6));
      return s;
    };
    const auto h = draw(), r = draw();
    worst = std::max(worst, std::abs(bleu<int>(std::span<const int>(h), std::span<const int>(r)) -
                                     oracle::bleu(h, r)));
  }
  std::size_t f1_bad = 0;
  for (unsigned p = 0; p < 64; ++p)
    for (unsigned l = 0; l < 64; ++l) {
      std::vector<ReasonSet> P{ReasonSet(p)}, L{ReasonSet(l)};
      bool ok = std::abs(f1_all<kNumReasons>(P, L) - oracle::example_f1(p, l, 6)) <= 1e-15;
      const auto cls = mf1<kNumReasons>(P, L);
      for (unsigned c = 0; c < 6; ++c) {
        const bool pc = p >> c & 1u, lc = l >> c & 1u;
        ok = ok && cls.counts[c].tp == std::size_t(pc && lc) && cls.counts[c].fp == std::size_t(pc && !lc) &&
             cls.counts[c].fn == std::size_t(!pc && lc);
      }
      if (!ok) ++f1_bad;
    }
  std::size_t action_bad = 0;
  for (unsigned m = 0; m < 64; ++m) {
    const auto [left, right] = oracle::actions(m);
    const auto a = derive_actions(ReasonSet(m));
    if (a.test(0) != left || a.test(1) != right) ++action_bad;
  }
  report(5, "metric oracles", worst <= 1e-12 && f1_bad == 0 && action_bad == 0,
         fmt("BLEU max |diff| %.3g over 1000 pairs, F1 mismatches %zu/4096, action mismatches %zu/64", worst,
             f1_bad, action_bad));
}

// ---------------------------------------------------------------------------
// 6. literal loss on a 2-example batch

void literal_loss() {
  auto a = oracle::tiny_problem(false, 21), b = oracle::tiny_problem(false, 22);
  b.target.ids = {Vocabulary::kSos, 5, Vocabulary::kEos, Vocabulary::kNull, Vocabulary::kNull};
  std::vector<Example> data{{a.features, a.target}, {b.features, b.target}};

  // by hand: -(1/N) sum_i sum_t log p over all T-1 positions, padding included
  double hand = 0;
  for (const auto& ex : data) {
    Graph g(false);
    const auto tf = forward_teacher_forced(g, ex.features, ex.target, a.params);
    const std::size_t V = a.params.config.vocab_size;
    for (std::size_t t = 0; t + 1 < ex.target.ids.size(); ++t) {
      const auto row = tf.logits.data().subspan(t * V, V);
      double z = 0;
      for (auto v : row) z += std::exp(double(v));
      hand -= std::log(std::exp(double(row[ex.target.ids[t + 1]])) / z);
    }
  }
  hand /= 2;

  TrainConfig cfg;
  cfg.h = 2;
  cfg.w = 2;
  cfg.f = 3;
  cfg.d = 3;
  cfg.max_length = 5;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.loss_mask = LossMask::None;
  auto [trained, rep] = fit(data, cfg, 6, {}, &a.params);
  const double reported = rep.epoch_loss[0];
  report(6, "literal loss", std::abs(reported - hand) <= 1e-9,
         fmt("reported %.15f, hand %.15f, |diff| %.3g", reported, hand, std::abs(reported - hand)));
}

// ---------------------------------------------------------------------------
// 7. determinism

void determinism(const OverfitRun& o1, const GeneralizationRun& g1) {
  const auto o2 = overfit_run();
  const auto g2 = generalization_run();
  const bool same = o1.checkpoint == o2.checkpoint && o1.report_json == o2.report_json &&
                    g1.checkpoint == g2.checkpoint && g1.report_json == g2.report_json &&
                    g1.metrics_json == g2.metrics_json && g1.alignment_json == g2.alignment_json;
  report(7, "determinism", same,
         fmt("second runs of 2-4: checkpoints %s/%s, reports %s/%s, metrics %s, alignment %s",
             o1.checkpoint == o2.checkpoint ? "identical" : "differ",
             g1.checkpoint == g2.checkpoint ? "identical" : "differ",
             o1.report_json == o2.report_json ? "identical" : "differ",
             g1.report_json == g2.report_json ? "identical" : "differ",
             g1.metrics_json == g2.metrics_json ? "identical" : "differ",
             g1.alignment_json == g2.alignment_json ? "identical" : "differ"));
}

// ---------------------------------------------------------------------------
// 8. gate parity

void gate_parity() {
  DecoderConfig gated_cfg;
  gated_cfg.gate_enabled = true;
  Rng rng(8);
  auto gated = init_params(gated_cfg, rng);
  for (auto& v : gated.gate_w.mutable_data()) v = 0;
  for (auto& v : gated.gate_b.mutable_data()) v = 0;
  auto plain = gated.clone();
  plain.config.gate_enabled = false;

  const auto scenes = generate_dataset(SceneSpec{}, 8, 3);
  double worst = 0, first_step = 0;
  std::size_t steps = 0;
  for (const auto& s : scenes) {
    auto g = Graph::no_grad();
    const auto X = s.features.flattened();
    const auto x = project_features(g, X, gated);
    auto state = init_state(g, X, gated);
    for (std::size_t pos = 1; pos < gated.config.max_length; ++pos) {
      const auto r = step(g, state, x, s.target.ids[pos - 1], gated);
      // the ungated decoder in the same state
      const auto u = step(g, state, x, s.target.ids[pos - 1], plain);
      for (std::size_t j = 0; j < gated.config.d; ++j) {
        const double diff = std::abs(double(r.context.data()[j]) - 0.5 * double(u.context.data()[j]));
        worst = std::max(worst, diff);
        if (pos == 1) first_step = std::max(first_step, diff);
      }
      ++steps;
      state = r.state;
    }
  }
  report(8, "gate ablation parity", worst <= 1e-9,
         fmt("max |gated - 0.5 * ungated| %.3g over %zu steps (first step %.3g)", worst, steps, first_step));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return selected.empty() || selected.contains(id); };

  try {
    if (want(1)) gradient_integrity();
    if (want(2) || want(3) || want(4) || want(7)) {
      const auto overfit = overfit_run();
      if (want(2) || want(7)) check_overfit(overfit);
      const auto general = generalization_run();
      if (want(3) || want(4) || want(7)) check_generalization(general);
      if (want(7)) determinism(overfit, general);
    }
    if (want(5)) metric_oracles();
    if (want(6)) literal_loss();
    if (want(8)) gate_parity();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
