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

// Dense tensors and a reverse-mode tape.
//
// A Tensor is a shared handle to a row-major buffer. Copying a Tensor aliases
// the buffer; use clone() for a deep copy. A Graph records one op per call and
// replays the records backwards in backward(). Leaves (parameters) accumulate
// gradients across graphs until zero_grad()/clear_grad() is called.
//
// Broadcasting is limited to one pattern: a length-s vector scaling the rows
// of an s x d matrix (Graph::broadcast_mul). Everything else requires equal
// shapes.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "riattn/error.hpp"

namespace riattn {

#ifdef RIATTN_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Graph;

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    for (auto d : shape)
      if (d == 0) fail(Errc::ShapeMismatch, "zero-sized dimension in " + to_string(shape));
    if (numel(shape) != values.size())
      fail(Errc::ShapeMismatch, "shape " + to_string(shape) + " needs " +
                                    std::to_string(numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
    impl_->shape = std::move(shape);
    impl_->value = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<real>(n, real(0)), requires_grad);
  }

  static Tensor scalar(real v, bool requires_grad = false) {
    return Tensor({}, {v}, requires_grad);
  }

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->value.size(); }

  std::span<const real> data() const { return impl_->value; }
  std::span<real> mutable_data() { return impl_->value; }

  real operator[](std::size_t i) const { return impl_->value[i]; }
  real at(std::size_t row, std::size_t col) const {
    return impl_->value[row * impl_->shape.back() + col];
  }

  real item() const {
    if (size() != 1) fail(Errc::ShapeMismatch, "item() on tensor of shape " + to_string(shape()));
    return impl_->value[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const real> grad() const { return impl_->grad; }
  std::span<real> mutable_grad() { return impl_->grad; }

  void zero_grad() { impl_->grad.assign(impl_->value.size(), real(0)); }
  void clear_grad() { impl_->grad.clear(); }

  /// Deep copy of shape, values and the requires_grad flag; the gradient is
  /// not copied.
  Tensor clone() const {
    return Tensor(impl_->shape, impl_->value, impl_->requires_grad);
  }

  bool aliases(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;
    bool requires_grad = false;
  };

  std::vector<real>& grad_buffer() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), real(0));
    return impl_->grad;
  }

  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

enum class OpKind {
  MatMul,
  SoftmaxScaled,
  Add,
  Mul,
  Sigmoid,
  Tanh,
  Log,
  Scale,
  BroadcastMul,
  ReduceMean,
  ReduceSum,
  SumAll,
  Concat,
  EmbedLookup,
  Slice,
  StackRows,
  SoftmaxCrossEntropy,
};

/// Reverse-mode tape. One Graph per forward pass; a non-recording Graph
/// evaluates the same ops without keeping any history (inference).
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  static Graph no_grad() { return Graph(false); }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
  std::size_t backward_visits() const noexcept { return visits_; }

  // matmul: [m x k] . [k x n] -> [m x n]. A rank-1 left operand is a row
  // vector ([k] . [k x n] -> [n]); a rank-1 right operand is a column vector
  // ([m x k] . [k] -> [m]).
  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2)
      fail(Errc::ShapeMismatch, "matmul supports rank 1 or 2 operands, got " +
                                    to_string(a.shape()) + " . " + to_string(b.shape()));
    const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
    const std::size_t k = a.rank() == 2 ? a.dim(1) : a.dim(0);
    const std::size_t kb = b.dim(0);
    const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
    if (k != kb)
      fail(Errc::ShapeMismatch, "matmul inner dims " + to_string(a.shape()) + " . " +
                                    to_string(b.shape()));
    Shape out_shape;
    if (a.rank() == 2) out_shape.push_back(m);
    if (b.rank() == 2) out_shape.push_back(n);
    std::vector<real> out(m * n, real(0));
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
      real* row = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const real av = A[i * k + p];
        const real* brow = B.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      }
    }
    return emit(OpKind::MatMul, {a, b}, std::move(out_shape), std::move(out),
                [m, k, n](Graph::Node& node) {
                  auto& a = node.inputs[0];
                  auto& b = node.inputs[1];
                  const auto& G = node.output.impl_->grad;
                  if (a.requires_grad()) {
                    auto& ga = a.grad_buffer();
                    auto B = b.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        real acc = 0;
                        const real* brow = B.data() + p * n;
                        const real* grow = G.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                      }
                  }
                  if (b.requires_grad()) {
                    auto& gb = b.grad_buffer();
                    auto A = a.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        const real av = A[i * k + p];
                        if (av == real(0)) continue;
                        real* gbrow = gb.data() + p * n;
                        const real* grow = G.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                      }
                  }
                });
  }

  /// softmax(scores / scale), stabilised by subtracting the max.
  Tensor softmax_scaled(const Tensor& scores, real scale) {
    if (scores.rank() != 1)
      fail(Errc::ShapeMismatch, "softmax_scaled expects a vector, got " + to_string(scores.shape()));
    if (!(scale > real(0))) fail(Errc::DomainError, "softmax scale must be positive");
    auto s = scores.data();
    std::vector<real> out(s.size());
    const real mx = *std::max_element(s.begin(), s.end());
    real total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out[i] = std::exp((s[i] - mx) / scale);
      total += out[i];
    }
    for (auto& v : out) v /= total;
    return emit(OpKind::SoftmaxScaled, {scores}, scores.shape(), std::move(out),
                [scale](Graph::Node& node) {
                  auto& in = node.inputs[0];
                  if (!in.requires_grad()) return;
                  const auto& y = node.output.impl_->value;
                  const auto& gy = node.output.impl_->grad;
                  real dot = 0;
                  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * gy[i];
                  auto& gx = in.grad_buffer();
                  for (std::size_t i = 0; i < y.size(); ++i)
                    gx[i] += y[i] * (gy[i] - dot) / scale;
                });
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<real> out(a.size());
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
    return emit(OpKind::Add, {a, b}, a.shape(), std::move(out), [](Graph::Node& node) {
      const auto& g = node.output.impl_->grad;
      for (auto& in : node.inputs) {
        if (!in.requires_grad()) continue;
        auto& gi = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    });
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<real> out(a.size());
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    return emit(OpKind::Mul, {a, b}, a.shape(), std::move(out), [](Graph::Node& node) {
      const auto& g = node.output.impl_->grad;
      auto& a = node.inputs[0];
      auto& b = node.inputs[1];
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        auto B = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        auto A = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      }
    });
  }

  Tensor sigmoid(const Tensor& a) {
    std::vector<real> out(a.size());
    auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      // Split by sign so exp never overflows.
      if (A[i] >= 0) {
        out[i] = real(1) / (real(1) + std::exp(-A[i]));
      } else {
        const real e = std::exp(A[i]);
        out[i] = e / (real(1) + e);
      }
    }
    return emit(OpKind::Sigmoid, {a}, a.shape(), std::move(out), [](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const auto& y = node.output.impl_->value;
      const auto& g = node.output.impl_->grad;
      auto& gi = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (real(1) - y[i]);
    });
  }

  Tensor tanh(const Tensor& a) {
    std::vector<real> out(a.size());
    auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
    return emit(OpKind::Tanh, {a}, a.shape(), std::move(out), [](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const auto& y = node.output.impl_->value;
      const auto& g = node.output.impl_->grad;
      auto& gi = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (real(1) - y[i] * y[i]);
    });
  }

  Tensor log(const Tensor& a) {
    std::vector<real> out(a.size());
    auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!(A[i] > real(0)))
        fail(Errc::DomainError, "log of non-positive value at index " + std::to_string(i));
      out[i] = std::log(A[i]);
    }
    return emit(OpKind::Log, {a}, a.shape(), std::move(out), [](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const auto& g = node.output.impl_->grad;
      auto A = in.data();
      auto& gi = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] / A[i];
    });
  }

  Tensor scale(const Tensor& a, real k) {
    std::vector<real> out(a.size());
    auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * k;
    return emit(OpKind::Scale, {a}, a.shape(), std::move(out), [k](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const auto& g = node.output.impl_->grad;
      auto& gi = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * k;
    });
  }

  /// out[i, j] = weights[i] * m[i, j]; weights has length s, m is s x d.
  Tensor broadcast_mul(const Tensor& weights, const Tensor& m) {
    if (weights.rank() != 1 || m.rank() != 2 || weights.dim(0) != m.dim(0))
      fail(Errc::ShapeMismatch, "broadcast_mul needs [s] and [s x d], got " +
                                    to_string(weights.shape()) + " and " + to_string(m.shape()));
    const std::size_t s = m.dim(0), d = m.dim(1);
    std::vector<real> out(s * d);
    auto W = weights.data();
    auto M = m.data();
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = W[i] * M[i * d + j];
    return emit(OpKind::BroadcastMul, {weights, m}, m.shape(), std::move(out),
                [s, d](Graph::Node& node) {
                  const auto& g = node.output.impl_->grad;
                  auto& w = node.inputs[0];
                  auto& m = node.inputs[1];
                  if (w.requires_grad()) {
                    auto& gw = w.grad_buffer();
                    auto M = m.data();
                    for (std::size_t i = 0; i < s; ++i) {
                      real acc = 0;
                      for (std::size_t j = 0; j < d; ++j) acc += g[i * d + j] * M[i * d + j];
                      gw[i] += acc;
                    }
                  }
                  if (m.requires_grad()) {
                    auto& gm = m.grad_buffer();
                    auto W = w.data();
                    for (std::size_t i = 0; i < s; ++i)
                      for (std::size_t j = 0; j < d; ++j) gm[i * d + j] += W[i] * g[i * d + j];
                  }
                });
  }

  Tensor reduce_sum(const Tensor& t, std::size_t axis) { return reduce(t, axis, false); }
  Tensor reduce_mean(const Tensor& t, std::size_t axis) { return reduce(t, axis, true); }

  /// Sum of every element, as a rank-0 tensor.
  Tensor sum(const Tensor& t) {
    real total = 0;
    for (auto v : t.data()) total += v;
    return emit(OpKind::SumAll, {t}, {}, {total}, [](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const real g = node.output.impl_->grad[0];
      for (auto& gi : in.grad_buffer()) gi += g;
    });
  }

  Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    if (a.rank() != b.rank() || axis >= a.rank())
      fail(Errc::ShapeMismatch, "concat of " + to_string(a.shape()) + " and " +
                                    to_string(b.shape()) + " on axis " + std::to_string(axis));
    for (std::size_t i = 0; i < a.rank(); ++i)
      if (i != axis && a.dim(i) != b.dim(i))
        fail(Errc::ShapeMismatch, "concat of " + to_string(a.shape()) + " and " +
                                      to_string(b.shape()) + " on axis " + std::to_string(axis));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t ca = a.dim(axis) * inner, cb = b.dim(axis) * inner;
    Shape out_shape = a.shape();
    out_shape[axis] += b.dim(axis);
    std::vector<real> out(outer * (ca + cb));
    auto A = a.data();
    auto B = b.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(A.data() + o * ca, ca, out.data() + o * (ca + cb));
      std::copy_n(B.data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
    }
    return emit(OpKind::Concat, {a, b}, std::move(out_shape), std::move(out),
                [outer, ca, cb](Graph::Node& node) {
                  const auto& g = node.output.impl_->grad;
                  auto& a = node.inputs[0];
                  auto& b = node.inputs[1];
                  if (a.requires_grad()) {
                    auto& ga = a.grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += g[o * (ca + cb) + i];
                  }
                  if (b.requires_grad()) {
                    auto& gb = b.grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t i = 0; i < cb; ++i)
                        gb[o * cb + i] += g[o * (ca + cb) + ca + i];
                  }
                });
  }

  /// Row `id` of a V x d table. The gradient touches only that row.
  Tensor embed_lookup(const Tensor& table, std::size_t id) {
    if (table.rank() != 2) fail(Errc::ShapeMismatch, "embedding table must be V x d");
    if (id >= table.dim(0))
      fail(Errc::IndexOutOfRange, "token id " + std::to_string(id) + " >= vocabulary size " +
                                      std::to_string(table.dim(0)));
    const std::size_t d = table.dim(1);
    auto T = table.data();
    std::vector<real> out(T.begin() + id * d, T.begin() + (id + 1) * d);
    return emit(OpKind::EmbedLookup, {table}, {d}, std::move(out), [id, d](Graph::Node& node) {
      auto& t = node.inputs[0];
      if (!t.requires_grad()) return;
      const auto& g = node.output.impl_->grad;
      auto& gt = t.grad_buffer();
      for (std::size_t j = 0; j < d; ++j) gt[id * d + j] += g[j];
    });
  }

  /// Elements [offset, offset + length) of a vector.
  Tensor slice(const Tensor& t, std::size_t offset, std::size_t length) {
    if (t.rank() != 1 || length == 0 || offset + length > t.dim(0))
      fail(Errc::ShapeMismatch, "slice [" + std::to_string(offset) + ", +" +
                                    std::to_string(length) + ") of " + to_string(t.shape()));
    auto T = t.data();
    std::vector<real> out(T.begin() + offset, T.begin() + offset + length);
    return emit(OpKind::Slice, {t}, {length}, std::move(out), [offset, length](Graph::Node& node) {
      auto& in = node.inputs[0];
      if (!in.requires_grad()) return;
      const auto& g = node.output.impl_->grad;
      auto& gi = in.grad_buffer();
      for (std::size_t j = 0; j < length; ++j) gi[offset + j] += g[j];
    });
  }

  /// Stacks equal-length vectors into a matrix, one row each.
  Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) fail(Errc::ShapeMismatch, "stack_rows of nothing");
    const std::size_t n = rows[0].size();
    std::vector<real> out;
    out.reserve(rows.size() * n);
    for (const auto& r : rows) {
      if (r.rank() != 1 || r.size() != n)
        fail(Errc::ShapeMismatch, "stack_rows needs equal-length vectors");
      out.insert(out.end(), r.data().begin(), r.data().end());
    }
    std::vector<Tensor> inputs(rows.begin(), rows.end());
    return emit(OpKind::StackRows, std::move(inputs), {rows.size(), n}, std::move(out),
                [n](Graph::Node& node) {
                  const auto& g = node.output.impl_->grad;
                  for (std::size_t r = 0; r < node.inputs.size(); ++r) {
                    auto& in = node.inputs[r];
                    if (!in.requires_grad()) continue;
                    auto& gi = in.grad_buffer();
                    for (std::size_t j = 0; j < n; ++j) gi[j] += g[r * n + j];
                  }
                });
  }

  /// Weighted negative log-likelihood of `targets` under a row-wise softmax
  /// of `logits` (T x V): sum_t weights[t] * -log softmax(logits[t])[targets[t]].
  /// Computed through log-sum-exp, so saturated rows never hit log(0).
  Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                               std::span<const real> weights) {
    if (logits.rank() != 2 || logits.dim(0) != targets.size() || weights.size() != targets.size())
      fail(Errc::ShapeMismatch, "cross entropy over " + to_string(logits.shape()) + " with " +
                                    std::to_string(targets.size()) + " targets");
    const std::size_t T = logits.dim(0), V = logits.dim(1);
    auto L = logits.data();
    std::vector<real> probs(T * V);
    real loss = 0;
    for (std::size_t t = 0; t < T; ++t) {
      if (targets[t] >= V)
        fail(Errc::IndexOutOfRange, "target id " + std::to_string(targets[t]) + " >= " +
                                        std::to_string(V));
      const real* row = L.data() + t * V;
      const real mx = *std::max_element(row, row + V);
      real z = 0;
      for (std::size_t c = 0; c < V; ++c) {
        probs[t * V + c] = std::exp(row[c] - mx);
        z += probs[t * V + c];
      }
      for (std::size_t c = 0; c < V; ++c) probs[t * V + c] /= z;
      if (weights[t] != real(0)) loss += weights[t] * (mx + std::log(z) - row[targets[t]]);
    }
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    std::vector<real> w(weights.begin(), weights.end());
    return emit(OpKind::SoftmaxCrossEntropy, {logits}, {}, {loss},
                [T, V, probs = std::move(probs), tgt = std::move(tgt),
                 w = std::move(w)](Graph::Node& node) {
                  auto& in = node.inputs[0];
                  if (!in.requires_grad()) return;
                  const real g = node.output.impl_->grad[0];
                  auto& gi = in.grad_buffer();
                  for (std::size_t t = 0; t < T; ++t) {
                    if (w[t] == real(0)) continue;
                    const real k = g * w[t];
                    for (std::size_t c = 0; c < V; ++c) gi[t * V + c] += k * probs[t * V + c];
                    gi[t * V + tgt[t]] -= k;
                  }
                });
  }

  /// Populates gradients of every requires_grad tensor reachable from `root`.
  void backward(const Tensor& root) {
    if (done_) fail(Errc::DoubleBackward, "backward already ran on this graph");
    if (root.size() != 1)
      fail(Errc::NonScalarRoot, "backward root has shape " + to_string(root.shape()));
    done_ = true;
    if (!root.requires_grad()) return;
    auto root_copy = root;
    root_copy.grad_buffer()[0] += real(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      auto& node = nodes_[i];
      if (!node.output.has_grad()) continue;
      ++visits_;
      node.pullback(node);
    }
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> pullback;
  };

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
      fail(Errc::ShapeMismatch, std::string(op) + " of " + to_string(a.shape()) + " and " +
                                    to_string(b.shape()));
  }

  static const char* op_name(OpKind k) {
    switch (k) {
      case OpKind::MatMul: return "matmul";
      case OpKind::SoftmaxScaled: return "softmax_scaled";
      case OpKind::Add: return "add";
      case OpKind::Mul: return "mul";
      case OpKind::Sigmoid: return "sigmoid";
      case OpKind::Tanh: return "tanh";
      case OpKind::Log: return "log";
      case OpKind::Scale: return "scale";
      case OpKind::BroadcastMul: return "broadcast_mul";
      case OpKind::ReduceMean: return "reduce_mean";
      case OpKind::ReduceSum: return "reduce_sum";
      case OpKind::SumAll: return "sum";
      case OpKind::Concat: return "concat";
      case OpKind::EmbedLookup: return "embed_lookup";
      case OpKind::Slice: return "slice";
      case OpKind::StackRows: return "stack_rows";
      case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
  }

  Tensor reduce(const Tensor& t, std::size_t axis, bool mean) {
    if (t.rank() < 1 || t.rank() > 2 || axis >= t.rank())
      fail(Errc::ShapeMismatch, "reduce over axis " + std::to_string(axis) + " of " +
                                    to_string(t.shape()));
    const std::size_t rows = t.rank() == 2 ? t.dim(0) : t.dim(0);
    const std::size_t cols = t.rank() == 2 ? t.dim(1) : 1;
    const bool over_rows = axis == 0;
    const std::size_t count = over_rows ? rows : cols;
    const std::size_t n_out = over_rows ? cols : rows;
    const real k = mean ? real(1) / real(count) : real(1);
    auto T = t.data();
    std::vector<real> out(n_out, real(0));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[over_rows ? j : i] += T[i * cols + j];
    if (mean)
      for (auto& v : out) v *= k;
    Shape out_shape;
    if (t.rank() == 2) out_shape.push_back(n_out);
    return emit(mean ? OpKind::ReduceMean : OpKind::ReduceSum, {t}, std::move(out_shape),
                std::move(out), [rows, cols, over_rows, k](Graph::Node& node) {
                  auto& in = node.inputs[0];
                  if (!in.requires_grad()) return;
                  const auto& g = node.output.impl_->grad;
                  auto& gi = in.grad_buffer();
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                      gi[i * cols + j] += k * g[over_rows ? j : i];
                });
  }

  Tensor emit(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<real> values,
              std::function<void(Node&)> pullback) {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i]))
        fail(Errc::NumericOverflow, std::string(op_name(kind)) + " produced a non-finite value");
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    Tensor out;
    out.impl_ = std::make_shared<Tensor::Impl>();
    out.impl_->shape = std::move(shape);
    out.impl_->value = std::move(values);
    out.impl_->requires_grad = record_ && needs_grad;
    if (out.impl_->requires_grad) {
      if (done_) fail(Errc::DoubleBackward, "graph already consumed by backward");
      nodes_.push_back(Node{kind, std::move(inputs), out, std::move(pullback)});
    }
    return out;
  }

  std::vector<Node> nodes_;
  bool record_ = true;
  bool done_ = false;
  std::size_t visits_ = 0;
};

}  // namespace riattn
