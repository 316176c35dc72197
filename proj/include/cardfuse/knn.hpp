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

#ifndef CARDFUSE_KNN_HPP_
#define CARDFUSE_KNN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/fusion.hpp"
#include "cardfuse/tensor.hpp"
#include "cardfuse/trainer.hpp"

namespace cardfuse {

enum class Metric { kEuclidean, kCosine };

inline Metric ParseMetric(const std::string& s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  throw Error(ErrorKind::kParameter, "metric must be euclidean|cosine, got '" + s + "'");
}

inline const char* MetricName(Metric m) {
  return m == Metric::kEuclidean ? "euclidean" : "cosine";
}

template <class T>
double KnnDistance(std::span<const T> a, std::span<const T> b, Metric metric) {
  if (metric == Metric::kEuclidean) return SquaredDistance(a, b);
  const double na = L2Norm(a);
  const double nb = L2Norm(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - Dot(a, b) / (na * nb);
}

// Majority label among the k nearest training rows.
//
// Neighbors are ordered by (distance, row id); row ids default to the row
// index. A vote tie goes to the tied label whose nearest member ranks first,
// which also resolves equal-distance members by lower id.
template <class T>
int KnnClassify(const Matrix<T>& train, std::span<const int> train_labels,
                std::span<const T> query, std::size_t k,
                Metric metric = Metric::kEuclidean,
                std::span<const std::size_t> row_ids = {}) {
  if (train.rows() != train_labels.size()) {
    throw Error(ErrorKind::kShape, "train matrix has " + std::to_string(train.rows()) +
                                       " rows but " +
                                       std::to_string(train_labels.size()) + " labels");
  }
  if (k < 1 || k > train.rows()) {
    throw Error(ErrorKind::kParameter, "k must lie in [1, " +
                                           std::to_string(train.rows()) + "], got " +
                                           std::to_string(k));
  }
  if (query.size() != train.cols()) {
    throw Error(ErrorKind::kShape, "query" + ShapeString(query.size()) +
                                       " against train rows" +
                                       ShapeString(train.cols()));
  }
  if (!row_ids.empty() && row_ids.size() != train.rows()) {
    throw Error(ErrorKind::kShape, "row id list does not match train rows");
  }
  struct Neighbor {
    double dist;
    std::size_t id;
    std::size_t row;
  };
  std::vector<Neighbor> all(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) {
    all[i] = {KnnDistance<T>(train.row(i), query, metric),
              row_ids.empty() ? i : row_ids[i], i};
  }
  const auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(k), all.end(), closer);

  // label -> (votes, rank of nearest member)
  std::map<int, std::pair<std::size_t, std::size_t>> votes;
  for (std::size_t r = 0; r < k; ++r) {
    auto [it, inserted] = votes.try_emplace(train_labels[all[r].row], 0, r);
    ++it->second.first;
  }
  int best = 0;
  std::size_t best_votes = 0;
  std::size_t best_rank = 0;
  for (const auto& [label, v] : votes) {
    if (v.first > best_votes || (v.first == best_votes && v.second < best_rank)) {
      best = label;
      best_votes = v.first;
      best_rank = v.second;
    }
  }
  return best;
}

// Classifies every row of `queries`, splitting rows across `threads` workers.
template <class T>
std::vector<int> KnnPredict(const Matrix<T>& train, std::span<const int> train_labels,
                            const Matrix<T>& queries, std::size_t k,
                            Metric metric = Metric::kEuclidean,
                            std::size_t threads = 1) {
  std::vector<int> out(queries.rows());
  if (queries.rows() == 0) return out;
  threads = std::clamp<std::size_t>(threads, 1, queries.rows());
  if (threads == 1) {
    for (std::size_t q = 0; q < queries.rows(); ++q) {
      out[q] = KnnClassify(train, train_labels, queries.row(q), k, metric);
    }
    return out;
  }
  // Validate once on the calling thread so workers cannot throw.
  out[0] = KnnClassify(train, train_labels, queries.row(0), k, metric);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t q = 1 + w; q < queries.rows(); q += threads) {
        out[q] = KnnClassify(train, train_labels, queries.row(q), k, metric);
      }
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Macro-averaged evaluation.

struct EvalReport {
  std::string mode;
  std::string classifier = "knn";  // "knn" or "head"
  std::size_t k = 0;               // 0 for the head classifier
  std::size_t n_test = 0;
  std::map<std::string, double> per_subcategory;
  std::map<std::string, double> per_category;
  double overall = 0.0;
  std::vector<std::string> warnings;
};

// Accuracy of each subcategory over its test records, the unweighted mean of
// subcategory accuracies per category, and the unweighted mean of categories.
// Subcategories without test records are left out with a warning.
inline EvalReport AssembleReport(const LabelSpace& space,
                                 std::span<const int> test_subcategories,
                                 std::span<const std::uint8_t> correct) {
  if (test_subcategories.size() != correct.size()) {
    throw Error(ErrorKind::kShape, "prediction and label counts differ");
  }
  EvalReport rep;
  rep.n_test = correct.size();
  const std::size_t n_sub = space.subcategories.size();
  std::vector<std::size_t> hits(n_sub, 0), totals(n_sub, 0);
  for (std::size_t i = 0; i < correct.size(); ++i) {
    const int s = test_subcategories[i];
    if (s < 0 || static_cast<std::size_t>(s) >= n_sub) {
      throw Error(ErrorKind::kData, "subcategory id " + std::to_string(s) + " out of range");
    }
    ++totals[s];
    if (correct[i]) ++hits[s];
  }
  std::vector<double> cat_sum(space.categories.size(), 0.0);
  std::vector<std::size_t> cat_count(space.categories.size(), 0);
  for (std::size_t s = 0; s < n_sub; ++s) {
    if (totals[s] == 0) {
      rep.warnings.push_back("subcategory '" + space.subcategories[s] +
                             "' has no test records; excluded");
      continue;
    }
    const double acc = static_cast<double>(hits[s]) / static_cast<double>(totals[s]);
    rep.per_subcategory[space.subcategories[s]] = acc;
    cat_sum[space.category_of_subcategory[s]] += acc;
    ++cat_count[space.category_of_subcategory[s]];
  }
  double overall = 0.0;
  std::size_t n_cat = 0;
  for (std::size_t c = 0; c < space.categories.size(); ++c) {
    if (cat_count[c] == 0) {
      rep.warnings.push_back("category '" + space.categories[c] +
                             "' has no evaluated subcategories; excluded");
      continue;
    }
    const double acc = cat_sum[c] / static_cast<double>(cat_count[c]);
    rep.per_category[space.categories[c]] = acc;
    overall += acc;
    ++n_cat;
  }
  rep.overall = n_cat ? overall / static_cast<double>(n_cat) : 0.0;
  return rep;
}

struct EvalOptions {
  std::size_t k = 20;
  Metric metric = Metric::kEuclidean;
  LabelLevel level = LabelLevel::kSubcategory;  // what the classifier predicts
  std::size_t threads = 1;
};

// kNN evaluation of precomputed embeddings. Labels are at `opt.level`; the
// report is always grouped by subcategory.
inline EvalReport Evaluate(const Matrix<float>& train_emb,
                           std::span<const int> train_labels,
                           const Matrix<float>& test_emb,
                           std::span<const int> test_labels,
                           std::span<const int> test_subcategories,
                           const LabelSpace& space, const std::string& mode,
                           const EvalOptions& opt) {
  if (test_emb.rows() != test_labels.size() ||
      test_labels.size() != test_subcategories.size()) {
    throw Error(ErrorKind::kShape, "test embeddings and labels differ in length");
  }
  const std::vector<int> pred =
      KnnPredict(train_emb, train_labels, test_emb, opt.k, opt.metric, opt.threads);
  std::vector<std::uint8_t> correct(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) correct[i] = pred[i] == test_labels[i];
  EvalReport rep = AssembleReport(space, test_subcategories, correct);
  rep.mode = mode;
  rep.k = opt.k;
  return rep;
}

// Evaluates each requested mode on the dataset's own train/test split.
// "head" is accepted as a mode when a classifier head is supplied: its
// prediction is the argmax of the head logits on the fused embedding.
struct CompareInputs {
  const Dataset* dataset = nullptr;
  const FusionParams<float>* params = nullptr;
  const ClassifierHead<float>* head = nullptr;
  LabelLevel head_level = LabelLevel::kSubcategory;
};

inline std::vector<EvalReport> CompareModes(const CompareInputs& in,
                                            std::span<const std::string> modes,
                                            const EvalOptions& opt) {
  const Dataset& ds = *in.dataset;
  std::vector<EmbeddingRecord> train, test;
  for (const auto& r : ds.records) {
    if (r.split == Split::kTrain) train.push_back(r);
    if (r.split == Split::kTest) test.push_back(r);
  }
  if (train.empty() || test.empty()) {
    throw Error(ErrorKind::kData, "evaluation needs records in both train and test splits");
  }
  const LabelSpace space = LabelSpace::FromRecords(ds.records);
  const auto train_labels = RecordLabels(train, space, opt.level);
  const auto test_labels = RecordLabels(test, space, opt.level);
  const auto test_subs = RecordLabels(test, space, LabelLevel::kSubcategory);

  std::vector<EvalReport> reports;
  for (const std::string& mode_name : modes) {
    if (mode_name == "head") {
      if (in.head == nullptr || in.params == nullptr) {
        throw Error(ErrorKind::kParameter, "mode 'head' needs a checkpoint with a classifier head");
      }
      const auto head_truth = RecordLabels(test, space, in.head_level);
      const Matrix<float> emb = EmbedRecords(in.params, test, EmbedMode::kFused);
      const Matrix<float> logits = HeadLogits(*in.head, emb);
      std::vector<std::uint8_t> correct(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto row = logits.row(i);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        correct[i] = static_cast<int>(best) == head_truth[i];
      }
      EvalReport rep = AssembleReport(space, test_subs, correct);
      rep.mode = "head";
      rep.classifier = "head";
      rep.k = 0;
      reports.push_back(std::move(rep));
      continue;
    }
    const EmbedMode mode = ParseEmbedMode(mode_name);
    const Matrix<float> train_emb = EmbedRecords(in.params, train, mode);
    const Matrix<float> test_emb = EmbedRecords(in.params, test, mode);
    reports.push_back(Evaluate(train_emb, train_labels, test_emb, test_labels, test_subs,
                               space, EmbedModeName(mode), opt));
  }
  return reports;
}

}  // namespace cardfuse

#endif  // CARDFUSE_KNN_HPP_
