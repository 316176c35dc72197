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

#ifndef CARDFUSE_MINING_HPP_
#define CARDFUSE_MINING_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardfuse/error.hpp"
#include "cardfuse/losses.hpp"
#include "cardfuse/random.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse {

enum class MiningStrategy { kSemiHard, kHard, kRandom };

inline const char* MiningStrategyName(MiningStrategy m) {
  switch (m) {
    case MiningStrategy::kSemiHard: return "semi_hard";
    case MiningStrategy::kHard: return "hard";
    case MiningStrategy::kRandom: return "random";
  }
  return "?";
}

inline MiningStrategy ParseMiningStrategy(const std::string& s) {
  if (s == "semi_hard" || s == "semi-hard") return MiningStrategy::kSemiHard;
  if (s == "hard") return MiningStrategy::kHard;
  if (s == "random") return MiningStrategy::kRandom;
  throw Error(ErrorKind::kParameter,
              "mining must be semi_hard|hard|random, got '" + s + "'");
}

// Squared Euclidean distances between all rows, accumulated in double.
template <class T>
Matrix<double> PairwiseSquaredDistances(const Matrix<T>& emb) {
  const std::size_t n = emb.rows();
  Matrix<double> d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = SquaredDistance(emb.row(i), emb.row(j));
    }
  }
  return d;
}

// Emits one triplet per ordered same-label pair (a, p), a != p, anchors and
// positives in ascending order.
//
// Semi-hard selection: among negatives farther from the anchor than the
// positive, take the closest one. It lies in the band
// d(a,p) < d(a,n) < d(a,p) + margin when the band is non-empty, and otherwise
// is the hardest negative beyond the positive. If every negative is at least
// as close as the positive, take the farthest negative. Equal distances go to
// the lowest row index. The margin therefore never changes the choice; it is
// accepted so call sites read the same for every strategy. `seed` only
// affects kRandom.
template <class T>
TripletBatch MineTriplets(const Matrix<T>& emb, std::span<const int> labels,
                          [[maybe_unused]] double margin,
                          MiningStrategy strategy,
                          std::uint64_t seed) {
  if (emb.rows() != labels.size()) {
    throw Error(ErrorKind::kShape, "embedding has " + std::to_string(emb.rows()) +
                                       " rows but " +
                                       std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = emb.rows();
  const Matrix<double> dist = PairwiseSquaredDistances(emb);
  Rng rng(DeriveSeed(seed, 0x3141u));
  TripletBatch out;
  std::vector<std::size_t> negatives;
  for (std::size_t a = 0; a < n; ++a) {
    negatives.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] != labels[a]) negatives.push_back(j);
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      if (negatives.empty()) {
        throw Error(ErrorKind::kData, "no negative available for anchor of class " +
                                          std::to_string(labels[a]));
      }
      const double dap = dist(a, p);
      std::size_t chosen = negatives.front();
      switch (strategy) {
        case MiningStrategy::kSemiHard: {
          bool beyond = false;
          std::size_t nearest_beyond = 0;
          std::size_t farthest = negatives.front();
          for (std::size_t cand : negatives) {
            const double dan = dist(a, cand);
            if (dan > dap && (!beyond || dan < dist(a, nearest_beyond))) {
              beyond = true;
              nearest_beyond = cand;
            }
            if (dan > dist(a, farthest)) farthest = cand;
          }
          chosen = beyond ? nearest_beyond : farthest;
          break;
        }
        case MiningStrategy::kHard:
          for (std::size_t cand : negatives) {
            if (dist(a, cand) < dist(a, chosen)) chosen = cand;
          }
          break;
        case MiningStrategy::kRandom:
          chosen = negatives[rng.Below(negatives.size())];
          break;
      }
      out.Add(a, p, chosen);
    }
  }
  return out;
}

}  // namespace cardfuse

#endif  // CARDFUSE_MINING_HPP_
