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

#ifndef CARDFUSE_LOSSES_HPP_
#define CARDFUSE_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cardfuse/error.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse {

// Parallel index lists into the rows of a batch embedding matrix.
struct TripletBatch {
  std::vector<std::size_t> anchor;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;

  std::size_t size() const { return anchor.size(); }
  bool empty() const { return anchor.empty(); }

  void Add(std::size_t a, std::size_t p, std::size_t n) {
    anchor.push_back(a);
    positive.push_back(p);
    negative.push_back(n);
  }

  friend bool operator==(const TripletBatch&, const TripletBatch&) = default;
};

template <class T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> grad;  // same shape as the loss input
  std::size_t active = 0;  // triplets strictly inside the hinge
  bool empty = false;      // no triplets were supplied
};

// Sum over triplets of max(0, |a-p|^2 - |a-n|^2 + margin). A triplet whose
// hinge argument is exactly zero counts as inactive.
template <class T>
LossResult<T> TripletLoss(const Matrix<T>& emb, const TripletBatch& triplets,
                          double margin) {
  if (triplets.anchor.size() != triplets.positive.size() ||
      triplets.anchor.size() != triplets.negative.size()) {
    throw Error(ErrorKind::kShape, "triplet index lists differ in length");
  }
  LossResult<T> out;
  out.grad = Matrix<T>(emb.rows(), emb.cols());
  out.empty = triplets.empty();
  for (std::size_t t = 0; t < triplets.size(); ++t) {
    const std::size_t a = triplets.anchor[t];
    const std::size_t p = triplets.positive[t];
    const std::size_t n = triplets.negative[t];
    if (a >= emb.rows() || p >= emb.rows() || n >= emb.rows()) {
      throw Error(ErrorKind::kParameter,
                  "triplet " + std::to_string(t) + " indexes past " +
                      std::to_string(emb.rows()) + " rows");
    }
    const double hinge = SquaredDistance(emb.row(a), emb.row(p)) -
                         SquaredDistance(emb.row(a), emb.row(n)) + margin;
    if (!(hinge > 0.0)) continue;
    out.loss += hinge;
    ++out.active;
    auto ga = out.grad.row(a);
    auto gp = out.grad.row(p);
    auto gn = out.grad.row(n);
    const auto ea = emb.row(a);
    const auto ep = emb.row(p);
    const auto en = emb.row(n);
    for (std::size_t j = 0; j < emb.cols(); ++j) {
      ga[j] += T(2) * (en[j] - ep[j]);
      gp[j] += T(2) * (ep[j] - ea[j]);
      gn[j] += T(2) * (ea[j] - en[j]);
    }
  }
  return out;
}

// Mean softmax cross-entropy with max-subtraction; grad = (softmax - onehot)/B.
template <class T>
LossResult<T> CrossEntropyLoss(const Matrix<T>& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorKind::kShape, "logits have " + std::to_string(logits.rows()) +
                                       " rows but " + std::to_string(labels.size()) +
                                       " labels were given");
  }
  LossResult<T> out;
  out.grad = Matrix<T>(logits.rows(), logits.cols());
  out.empty = labels.empty();
  if (labels.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(labels.size());
  std::vector<double> prob(logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw Error(ErrorKind::kData, "label " + std::to_string(y) + " at row " +
                                        std::to_string(i) + " is outside [0, " +
                                        std::to_string(logits.cols()) + ")");
    }
    const auto row = logits.row(i);
    double max_logit = -INFINITY;
    for (T v : row) max_logit = std::max(max_logit, static_cast<double>(v));
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      prob[c] = std::exp(static_cast<double>(row[c]) - max_logit);
      sum += prob[c];
    }
    const double log_sum = std::log(sum);
    out.loss += (log_sum - (static_cast<double>(row[y]) - max_logit)) * inv_batch;
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double target = static_cast<int>(c) == y ? 1.0 : 0.0;
      g[c] = static_cast<T>((prob[c] / sum - target) * inv_batch);
    }
  }
  out.active = labels.size();
  return out;
}

}  // namespace cardfuse

#endif  // CARDFUSE_LOSSES_HPP_
