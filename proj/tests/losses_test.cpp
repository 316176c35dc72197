// Copyright 2026 The Cardfuse Authors.
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

#include "cardfuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace cardfuse {
namespace {

using ::cardfuse::testing::RandomMatrix;
using ::cardfuse::testing::RelativeError;

Matrix<double> Rows(std::initializer_list<std::vector<double>> rows) {
  Matrix<double> m(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::copy(r.begin(), r.end(), m.row(i++).begin());
  }
  return m;
}

TripletBatch One(std::size_t a, std::size_t p, std::size_t n) {
  TripletBatch t;
  t.Add(a, p, n);
  return t;
}

template <class F>
double MaxFdError(Matrix<double>& x, const Matrix<double>& analytic, F loss) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double& v = x.flat()[i];
    const double saved = v;
    v = saved + 1e-6;
    const double up = loss();
    v = saved - 1e-6;
    const double down = loss();
    v = saved;
    worst = std::max(worst, RelativeError(analytic.flat()[i], (up - down) / 2e-6));
  }
  return worst;
}

TEST(TripletLossTest, TrivialCases) {
  // Anchor equals positive, negative at squared distance exactly the margin.
  const double alpha = 0.2;
  const auto emb = Rows({{0.0, 0.0}, {0.0, 0.0}, {std::sqrt(alpha), 0.0}});
  EXPECT_NEAR(TripletLoss(emb, One(0, 1, 2), alpha).loss, 0.0, 1e-6);

  const auto same = Rows({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  const auto r = TripletLoss(same, One(0, 1, 2), alpha);
  EXPECT_NEAR(r.loss, alpha, 1e-6);
  EXPECT_EQ(r.active, 1u);

  const auto easy = Rows({{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}});
  EXPECT_NEAR(TripletLoss(easy, One(0, 1, 2), alpha).loss, 0.0, 1e-6);
}

TEST(TripletLossTest, ZeroHingeIsInactive) {
  const auto emb = Rows({{0.0}, {0.0}, {0.5}});
  const auto r = TripletLoss(emb, One(0, 1, 2), 0.25);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.active, 0u);
  for (double g : r.grad.flat()) EXPECT_EQ(g, 0.0);
}

TEST(TripletLossTest, EmptyBatchFlagged) {
  const auto emb = Rows({{0.0}, {1.0}});
  const auto r = TripletLoss(emb, TripletBatch{}, 0.2);
  EXPECT_TRUE(r.empty);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(TripletLossTest, OutOfRangeIndexRejected) {
  const auto emb = Rows({{0.0}, {1.0}});
  EXPECT_THROW(TripletLoss(emb, One(0, 1, 2), 0.2), Error);
}

TEST(TripletLossTest, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    auto emb = RandomMatrix(gen, 12, 8, 0.5);
    TripletBatch t;
    std::uniform_int_distribution<std::size_t> pick(0, 11);
    for (int k = 0; k < 20; ++k) t.Add(pick(gen), pick(gen), pick(gen));
    const auto r = TripletLoss(emb, t, 1.0);
    EXPECT_LT(MaxFdError(emb, r.grad, [&] { return TripletLoss(emb, t, 1.0).loss; }), 1e-3)
        << "seed " << seed;
  }
}

TEST(TripletLossTest, NonNegativeAndOrderInvariant) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto emb = RandomMatrix(gen, 10, 4, 1.0);
    TripletBatch t;
    std::uniform_int_distribution<std::size_t> pick(0, 9);
    for (int k = 0; k < 15; ++k) t.Add(pick(gen), pick(gen), pick(gen));
    const double loss = TripletLoss(emb, t, 0.2).loss;
    EXPECT_GE(loss, 0.0);

    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    TripletBatch shuffled;
    for (std::size_t o : order) shuffled.Add(t.anchor[o], t.positive[o], t.negative[o]);
    EXPECT_NEAR(TripletLoss(emb, shuffled, 0.2).loss, loss, 1e-9);
  }
}

TEST(TripletLossTest, LargeSeparationGivesZero) {
  const auto emb = Rows({{0.0, 0.0}, {0.1, 0.0}, {100.0, 0.0}});
  EXPECT_EQ(TripletLoss(emb, One(0, 1, 2), 0.2).loss, 0.0);
}

// ---------------------------------------------------------------------------

TEST(CrossEntropyLossTest, UniformLogitsGiveLogClasses) {
  Matrix<double> logits(3, 5);
  logits.Fill(1.7);
  const std::vector<int> labels = {0, 4, 2};
  EXPECT_NEAR(CrossEntropyLoss(logits, labels).loss, std::log(5.0), 1e-6);
}

TEST(CrossEntropyLossTest, ConfidentCorrectGivesNearZero) {
  const auto logits = Rows({{50.0, 0.0, 0.0}});
  const std::vector<int> labels = {0};
  EXPECT_NEAR(CrossEntropyLoss(logits, labels).loss, 0.0, 1e-6);
}

TEST(CrossEntropyLossTest, TwoClassExample) {
  const auto logits = Rows({{2.0, 0.0}});
  const std::vector<int> labels = {0};
  EXPECT_NEAR(CrossEntropyLoss(logits, labels).loss, 0.126928, 1e-6);
  EXPECT_NEAR(CrossEntropyLoss(logits, labels).loss, std::log1p(std::exp(-2.0)), 1e-12);
}

TEST(CrossEntropyLossTest, StableForHugeLogits) {
  const auto logits = Rows({{1e4, -1e4, 0.0}});
  const std::vector<int> labels = {1};
  const auto r = CrossEntropyLoss(logits, labels);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 2e4, 1e-6);
}

TEST(CrossEntropyLossTest, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    auto logits = RandomMatrix(gen, 12, 6, 2.0);
    std::vector<int> labels(12);
    std::uniform_int_distribution<int> pick(0, 5);
    for (auto& l : labels) l = pick(gen);
    const auto r = CrossEntropyLoss(logits, labels);
    EXPECT_LT(MaxFdError(logits, r.grad, [&] { return CrossEntropyLoss(logits, labels).loss; }),
              1e-3);
    EXPECT_GE(r.loss, 0.0);
  }
}

TEST(CrossEntropyLossTest, BadLabelRejected) {
  const auto logits = Rows({{0.0, 1.0}});
  const std::vector<int> labels = {2};
  try {
    CrossEntropyLoss(logits, labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
  const std::vector<int> two = {0, 1};
  EXPECT_THROW(CrossEntropyLoss(logits, two), Error);
}

}  // namespace
}  // namespace cardfuse
