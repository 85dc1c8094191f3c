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
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "riattn/tensor.hpp"

using namespace riattn;

namespace {

Tensor leaf(Shape shape, std::vector<real> v) { return Tensor(std::move(shape), std::move(v), true); }

Tensor random_leaf(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<real> v(numel(shape));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return leaf(std::move(shape), std::move(v));
}

/// Max relative error between backward() and central differences of a scalar
/// function of `inputs`.
double fd_error(std::vector<Tensor> inputs, const std::function<Tensor(Graph&)>& f) {
  for (auto& t : inputs) t.zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  double worst = 0;
  for (auto& t : inputs) {
    std::vector<real> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double step = 1e-5 * std::max(1.0, std::abs(double(values[i])));
      const double numeric = oracle::central_difference(
          [&] {
            auto g = Graph::no_grad();
            return double(f(g).item());
          },
          values[i], step);
      worst = std::max(worst, oracle::relative_error(analytic[i], numeric));
    }
  }
  return worst;
}

}  // namespace

TEST(Tensor, ConstructionChecksShape) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), Error);
  EXPECT_THROW(Tensor({0, 2}, {}), Error);
  auto t = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.at(1, 2), 6);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(Tensor, CloneDoesNotAlias) {
  auto a = Tensor({2}, {1, 2}, true);
  auto b = a;
  auto c = a.clone();
  EXPECT_TRUE(a.aliases(b));
  EXPECT_FALSE(a.aliases(c));
  c.mutable_data()[0] = 9;
  EXPECT_EQ(a.data()[0], 1);
}

TEST(Tensor, MatmulHandValues) {
  Graph g;
  auto a = Tensor({2, 2}, {1, 2, 3, 4});
  auto b = Tensor({2, 2}, {5, 6, 7, 8});
  auto c = g.matmul(a, b);
  EXPECT_EQ((std::vector<real>(c.data().begin(), c.data().end())), (std::vector<real>{19, 22, 43, 50}));
  auto row = g.matmul(Tensor({2}, {1, 1}), b);
  EXPECT_EQ(row.shape(), (Shape{2}));
  EXPECT_EQ(row.data()[1], 14);
  auto col = g.matmul(a, Tensor({2}, {1, 0}));
  EXPECT_EQ(col.shape(), (Shape{2}));
  EXPECT_EQ(col.data()[1], 3);
}

TEST(Tensor, MatmulShapeMismatch) {
  Graph g;
  try {
    g.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Tensor, SoftmaxHandValues) {
  Graph g;
  auto y = g.softmax_scaled(Tensor({3}, {0, std::log(real(2)), std::log(real(5))}), 1);
  EXPECT_NEAR(y.data()[0], 1.0 / 8, 1e-15);
  EXPECT_NEAR(y.data()[1], 2.0 / 8, 1e-15);
  EXPECT_NEAR(y.data()[2], 5.0 / 8, 1e-15);
  // scaling divides the scores
  auto z = g.softmax_scaled(Tensor({2}, {0, 2 * std::log(real(3))}), 2);
  EXPECT_NEAR(z.data()[1], 0.75, 1e-15);
}

TEST(Tensor, SoftmaxIsStableForLargeScores) {
  Graph g;
  auto y = g.softmax_scaled(Tensor({3}, {1000, 1000, -1000}), 1);
  EXPECT_NEAR(y.data()[0], 0.5, 1e-15);
  EXPECT_EQ(y.data()[2], 0);
}

TEST(Tensor, SigmoidIsFiniteAtExtremes) {
  Graph g;
  auto y = g.sigmoid(Tensor({3}, {-800, 0, 800}));
  EXPECT_EQ(y.data()[0], 0);
  EXPECT_EQ(y.data()[1], 0.5);
  EXPECT_EQ(y.data()[2], 1);
}

TEST(Tensor, LogOfNonPositiveIsDomainError) {
  Graph g;
  try {
    g.log(Tensor({2}, {1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DomainError);
  }
}

TEST(Tensor, OverflowIsReported) {
  Graph g;
  auto big = Tensor({1}, {real(1e300)});
  try {
    g.mul(big, big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NumericOverflow);
  }
}

TEST(Tensor, BroadcastMulThenSumIsWeightedSum) {
  Rng rng(3);
  auto w = random_leaf({4}, rng);
  auto m = random_leaf({4, 3}, rng);
  Graph g;
  auto ctx = g.reduce_sum(g.broadcast_mul(w, m), 0);
  auto direct = g.matmul(w, m);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(ctx.data()[j], direct.data()[j], 1e-14);
}

TEST(Tensor, ShapeOps) {
  Graph g;
  auto a = Tensor({2}, {1, 2});
  auto b = Tensor({3}, {3, 4, 5});
  auto c = g.concat(a, b, 0);
  EXPECT_EQ(c.shape(), (Shape{5}));
  EXPECT_EQ(c.data()[4], 5);
  auto s = g.slice(c, 1, 3);
  EXPECT_EQ((std::vector<real>(s.data().begin(), s.data().end())), (std::vector<real>{2, 3, 4}));
  EXPECT_THROW(g.slice(c, 4, 2), Error);
  auto table = Tensor({3, 2}, {0, 1, 2, 3, 4, 5});
  auto row = g.embed_lookup(table, 2);
  EXPECT_EQ(row.data()[1], 5);
  try {
    g.embed_lookup(table, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IndexOutOfRange);
  }
  auto m = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto mean0 = g.reduce_mean(m, 0);
  EXPECT_EQ(mean0.data()[2], 4.5);
  auto sum1 = g.reduce_sum(m, 1);
  EXPECT_EQ(sum1.data()[1], 15);
  std::vector<Tensor> rows{a, Tensor({2}, {7, 8})};
  auto st = g.stack_rows(rows);
  EXPECT_EQ(st.shape(), (Shape{2, 2}));
  EXPECT_EQ(st.at(1, 0), 7);
}

TEST(Tensor, BackwardHandExample) {
  // L = sum((a * b) + a) with a = [1, 2], b = [3, 4] -> dL/da = b + 1, dL/db = a.
  auto a = leaf({2}, {1, 2});
  auto b = leaf({2}, {3, 4});
  Graph g;
  auto L = g.sum(g.add(g.mul(a, b), a));
  EXPECT_EQ(L.item(), 14);
  g.backward(L);
  EXPECT_EQ(a.grad()[0], 4);
  EXPECT_EQ(a.grad()[1], 5);
  EXPECT_EQ(b.grad()[0], 1);
  EXPECT_EQ(b.grad()[1], 2);
}

TEST(Tensor, BackwardVisitsEachNodeOnce) {
  auto a = leaf({3}, {1, 2, 3});
  Graph g;
  auto t = g.tanh(a);
  auto L = g.sum(g.add(t, t));
  EXPECT_EQ(g.size(), 3u);
  g.backward(L);
  EXPECT_EQ(g.backward_visits(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double th = std::tanh(double(i + 1));
    EXPECT_NEAR(a.grad()[i], 2 * (1 - th * th), 1e-14);
  }
}

TEST(Tensor, BackwardErrors) {
  auto a = leaf({2}, {1, 2});
  Graph g;
  auto y = g.scale(a, 2);
  try {
    g.backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonScalarRoot);
  }
  Graph g2;
  auto L = g2.sum(a);
  g2.backward(L);
  try {
    g2.backward(L);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DoubleBackward);
  }
}

TEST(Tensor, NoGradGraphRecordsNothing) {
  auto a = leaf({2}, {1, 2});
  auto g = Graph::no_grad();
  auto L = g.sum(g.mul(a, a));
  EXPECT_EQ(g.size(), 0u);
  EXPECT_FALSE(L.requires_grad());
}

TEST(Tensor, CrossEntropyHandValue) {
  // one row, uniform logits over 4 classes -> log 4
  auto logits = leaf({1, 4}, {0, 0, 0, 0});
  Graph g;
  std::vector<std::size_t> tgt{2};
  std::vector<real> w{1};
  auto L = g.softmax_cross_entropy(logits, tgt, w);
  EXPECT_NEAR(L.item(), std::log(4.0), 1e-15);
  g.backward(L);
  EXPECT_NEAR(logits.grad()[0], 0.25, 1e-15);
  EXPECT_NEAR(logits.grad()[2], -0.75, 1e-15);
}

TEST(Tensor, CrossEntropyOfSaturatedRowIsFinite) {
  auto logits = leaf({1, 3}, {2000, 0, 0});
  Graph g;
  std::vector<std::size_t> tgt{1};
  std::vector<real> w{1};
  EXPECT_NEAR(g.softmax_cross_entropy(logits, tgt, w).item(), 2000, 1e-9);
}

// Finite-difference property over random shapes and values.

class TensorGradients : public ::testing::TestWithParam<int> {};

TEST_P(TensorGradients, MatchFiniteDifferences) {
  Rng rng(static_cast<std::uint64_t>(GetParam()));
  const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
  auto A = random_leaf({m, k}, rng);
  auto B = random_leaf({k, n}, rng);
  auto v = random_leaf({n}, rng);
  auto pos = random_leaf({m}, rng, 0.5, 2.0);
  auto w = random_leaf({m}, rng);

  EXPECT_LT(fd_error({A, B, v}, [&](Graph& g) {
              auto x = g.matmul(A, B);
              auto s = g.matmul(x, v);
              return g.sum(g.mul(g.softmax_scaled(s, 1.7), w));
            }),
            1e-6);
  EXPECT_LT(fd_error({A, pos}, [&](Graph& g) {
              auto r = g.reduce_mean(A, 1);
              auto t = g.tanh(g.add(r, g.log(pos)));
              return g.sum(g.mul(g.sigmoid(t), g.scale(t, -0.3)));
            }),
            1e-6);
  EXPECT_LT(fd_error({A, w}, [&](Graph& g) {
              auto c = g.reduce_sum(g.broadcast_mul(g.softmax_scaled(w, 1), A), 0);
              auto cat = g.concat(c, g.reduce_sum(A, 0), 0);
              auto sl = g.slice(cat, 0, k);
              std::vector<Tensor> rows{sl, g.slice(cat, k, k)};
              auto st = g.stack_rows(rows);
              std::vector<std::size_t> tgt{0, k - 1};
              std::vector<real> wt{1, 0.5};
              return g.softmax_cross_entropy(st, tgt, wt);
            }),
            1e-6);
  auto table = random_leaf({5, n}, rng);
  EXPECT_LT(fd_error({table, v}, [&](Graph& g) {
              return g.sum(g.mul(g.embed_lookup(table, 3), g.embed_lookup(table, 1)));
            }),
            1e-6);
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, TensorGradients, ::testing::Range(1, 26));
