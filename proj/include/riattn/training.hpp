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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/rng.hpp"
#include "riattn/tensor.hpp"
#include "riattn/tokenizer.hpp"

namespace riattn {

enum class OptimizerKind { Sgd, Adam };

/// Which target positions enter the loss. None sums every position, <NULL>
/// padding included; AfterEos stops at (and includes) the first <EOS>.
enum class LossMask { None, AfterEos };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossMask loss_mask = LossMask::None;
  std::uint64_t seed = 0;
  bool gate_enabled = false;
  std::size_t h = 7, w = 7, f = 32, d = 64;
  std::size_t max_length = kCanonicalMaxLength;
  double clip_norm = 0.0;  // 0 disables clipping
  std::size_t threads = 1;

  void validate() const {
    if (!(learning_rate > 0) || batch_size == 0 || h == 0 || w == 0 || f == 0 || d == 0 ||
        max_length < 2 || threads == 0)
      fail(Errc::InvalidConfig, "learning rate, batch size, dims, T_max and threads must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0))
      fail(Errc::InvalidConfig, "adaptive-moment decay rates must lie in [0, 1), epsilon > 0");
    if (clip_norm < 0) fail(Errc::InvalidConfig, "clip_norm must be >= 0");
  }

  DecoderConfig decoder(std::size_t vocab_size) const {
    return DecoderConfig{h, w, f, d, vocab_size, max_length, gate_enabled};
  }
};

/// Loss weight of each predicted position 1..T-1 of `target`.
inline std::vector<real> position_weights(const TokenSequence& target, LossMask mask) {
  std::vector<real> w(target.ids.size() - 1, real(1));
  if (mask == LossMask::AfterEos) {
    bool past = false;
    for (std::size_t pos = 1; pos < target.ids.size(); ++pos) {
      if (past) w[pos - 1] = 0;
      if (target.ids[pos] == Vocabulary::kEos) past = true;
    }
  }
  return w;
}

/// -(1/N) sum_i sum_t log p_i,t(target_i[t]) over the included positions;
/// logits[i] is (T-1) x V and predicts target_i[1..T-1].
inline Tensor temporal_cross_entropy(Graph& g, std::span<const Tensor> logits,
                                     std::span<const TokenSequence> targets, LossMask mask) {
  if (logits.empty() || logits.size() != targets.size())
    fail(Errc::ShapeMismatch, "need one logits matrix per target");
  Tensor total;
  const real inv_n = real(1) / static_cast<real>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& tgt = targets[i].ids;
    if (tgt.size() < 2 || logits[i].rank() != 2 || logits[i].dim(0) != tgt.size() - 1)
      fail(Errc::ShapeMismatch, "logits " + to_string(logits[i].shape()) + " for target of length " +
                                    std::to_string(tgt.size()));
    auto weights = position_weights(targets[i], mask);
    for (auto& w : weights) w *= inv_n;
    std::span<const std::size_t> next(tgt.data() + 1, tgt.size() - 1);
    auto term = g.softmax_cross_entropy(logits[i], next, weights);
    total = total.defined() ? g.add(total, term) : term;
  }
  return total;
}

inline Tensor temporal_cross_entropy(Graph& g, const Tensor& logits, const TokenSequence& target,
                                     LossMask mask) {
  return temporal_cross_entropy(g, std::span<const Tensor>(&logits, 1),
                                std::span<const TokenSequence>(&target, 1), mask);
}

/// Plain gradient descent or bias-corrected adaptive-moment updates over a
/// fixed list of tensors. Moments are keyed by position in that list.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  std::size_t steps() const noexcept { return steps_; }

  void step(std::span<Tensor* const> params) {
    for (auto* p : params)
      if (!p->has_grad()) fail(Errc::MissingGradient, "parameter has no gradient");
    ++steps_;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      const real lr = static_cast<real>(cfg_.learning_rate);
      for (auto* p : params) {
        auto v = p->mutable_data();
        auto g = p->grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
      }
      return;
    }
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
    if (m_.size() != params.size()) fail(Errc::ShapeMismatch, "optimizer parameter list changed");
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto val = params[k]->mutable_data();
      auto g = params[k]->grad();
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.size() != val.size()) fail(Errc::ShapeMismatch, "optimizer parameter shape changed");
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = g[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        val[i] -= static_cast<real>(cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

  void step(DecoderParams& params) {
    std::vector<Tensor*> list;
    for (auto& [name, t] : params.named()) list.push_back(t);
    step(list);
  }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(DecoderParams& params, double max_norm) {
  double sq = 0;
  for (auto& [name, t] : params.named())
    for (auto g : t->grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const real k = static_cast<real>(max_norm / norm);
    for (auto& [name, t] : params.named())
      for (auto& g : t->mutable_grad()) g *= k;
  }
  return norm;
}

struct Example {
  FeatureMap features;
  TokenSequence target;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> token_accuracy;
  double wall_seconds = 0;
  std::string checkpoint_id;

  /// Equality over everything reproducible (wall-clock excluded).
  bool same_outcome(const TrainReport& o) const {
    return epoch_loss == o.epoch_loss && token_accuracy == o.token_accuracy &&
           checkpoint_id == o.checkpoint_id;
  }
};

/// Loss value, token hits and included-position count for one example.
struct ExampleOutcome {
  double loss = 0;
  std::size_t correct = 0;
  std::size_t counted = 0;
};

/// Forward + backward for one example with loss weight `scale`; gradients
/// accumulate into the leaves of `params`.
inline ExampleOutcome example_gradient(const DecoderParams& params, const Example& ex,
                                       LossMask mask, real scale = real(1)) {
  Graph g;
  auto tf = forward_teacher_forced(g, ex.features, ex.target, params);
  auto loss = temporal_cross_entropy(g, tf.logits, ex.target, mask);
  ExampleOutcome out;
  out.loss = loss.item();
  const auto weights = position_weights(ex.target, mask);
  const std::size_t V = params.config.vocab_size;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    if (weights[r] == 0) continue;
    ++out.counted;
    auto row = tf.logits.data().subspan(r * V, V);
    const auto pred = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == ex.target.ids[r + 1]) ++out.correct;
  }
  if (scale != real(1)) loss = g.scale(loss, scale);
  g.backward(loss);
  return out;
}

namespace detail {

inline std::vector<real> flatten_grads(const DecoderParams& p) {
  std::vector<real> out;
  out.reserve(p.parameter_count());
  for (const auto& [name, t] : p.named()) out.insert(out.end(), t->grad().begin(), t->grad().end());
  return out;
}

/// Per-example gradients for `batch`, computed on up to `threads` workers,
/// each on its own parameter replica. Results are indexed by batch position.
inline std::vector<std::pair<ExampleOutcome, std::vector<real>>> batch_gradients(
    const DecoderParams& params, std::span<const Example> data, std::span<const std::size_t> batch,
    LossMask mask, std::size_t threads) {
  std::vector<std::pair<ExampleOutcome, std::vector<real>>> results(batch.size());
  auto work = [&](const DecoderParams& replica_src, std::size_t worker, std::size_t stride) {
    DecoderParams replica = replica_src;
    for (std::size_t k = worker; k < batch.size(); k += stride) {
      replica.zero_grad();
      auto outcome = example_gradient(replica, data[batch[k]], mask);
      results[k] = {outcome, flatten_grads(replica)};
    }
  };
  const std::size_t n_workers = std::min(threads, batch.size());
  if (n_workers <= 1) {
    work(params, 0, 1);
    return results;
  }
  std::vector<DecoderParams> replicas;
  for (std::size_t t = 0; t < n_workers; ++t) replicas.push_back(params.clone());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_workers; ++t)
    pool.emplace_back(work, std::cref(replicas[t]), t, n_workers);
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace detail

/// Called after every epoch; returns an identifier for the checkpoint it
/// wrote (or an empty string).
using EpochHook =
    std::function<std::string(std::size_t epoch, const DecoderParams&, const TrainReport&)>;

/// Mini-batch training with teacher forcing. Parameters come from
/// Rng(seed).split(0) unless `initial` is given; the epoch shuffle uses
/// Rng(seed).split(1). Per-example gradients are summed in batch order, so
/// the result does not depend on `threads`.
inline std::pair<DecoderParams, TrainReport> fit(std::span<const Example> data,
                                                 const TrainConfig& cfg, std::size_t vocab_size,
                                                 const EpochHook& hook = {},
                                                 const DecoderParams* initial = nullptr) {
  cfg.validate();
  if (data.empty()) fail(Errc::EmptyDataset, "no training examples");
  const auto dcfg = cfg.decoder(vocab_size);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    if (ex.features.h != cfg.h || ex.features.w != cfg.w || ex.features.f != cfg.f ||
        ex.target.ids.size() != cfg.max_length)
      fail(Errc::DimMismatch, "example " + std::to_string(i) + " does not match the configured dims");
  }

  const Rng root(cfg.seed);
  DecoderParams params;
  if (initial) {
    if (!(initial->config == dcfg)) fail(Errc::DimMismatch, "initial parameters do not match config");
    params = initial->clone();
  } else {
    Rng init_rng = root.split(0);
    params = init_params(dcfg, init_rng);
  }
  Rng shuffle_rng = root.split(1);
  Optimizer opt(cfg);
  TrainReport report;
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(data.size());
  std::vector<real> summed(params.parameter_count());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0, counted = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> batch(order.data() + start, len);
      auto results = detail::batch_gradients(params, data, batch, cfg.loss_mask, cfg.threads);

      std::fill(summed.begin(), summed.end(), real(0));
      for (const auto& [outcome, grads] : results) {
        loss_sum += outcome.loss;
        correct += outcome.correct;
        counted += outcome.counted;
        for (std::size_t i = 0; i < grads.size(); ++i) summed[i] += grads[i];
      }
      const real inv = real(1) / static_cast<real>(len);
      std::size_t offset = 0;
      for (auto& [name, t] : params.named()) {
        t->zero_grad();
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = summed[offset + i] * inv;
        offset += g.size();
      }
      if (cfg.clip_norm > 0) clip_grad_norm(params, cfg.clip_norm);
      opt.step(params);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    report.token_accuracy.push_back(counted ? static_cast<double>(correct) / counted : 0.0);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (hook) report.checkpoint_id = hook(epoch, params, report);
  }
  for (auto& [name, t] : params.named()) t->clear_grad();
  return {std::move(params), std::move(report)};
}

}  // namespace riattn
