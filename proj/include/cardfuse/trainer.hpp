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

#ifndef CARDFUSE_TRAINER_HPP_
#define CARDFUSE_TRAINER_HPP_

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/fusion.hpp"
#include "cardfuse/losses.hpp"
#include "cardfuse/mining.hpp"
#include "cardfuse/optimizer.hpp"
#include "cardfuse/random.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse {

enum class Objective { kTriplet, kCrossEntropy };

inline const char* ObjectiveName(Objective o) {
  return o == Objective::kTriplet ? "triplet" : "cross_entropy";
}

inline Objective ParseObjective(const std::string& s) {
  if (s == "triplet") return Objective::kTriplet;
  if (s == "cross_entropy" || s == "cross-entropy" || s == "ce") {
    return Objective::kCrossEntropy;
  }
  throw Error(ErrorKind::kParameter,
              "objective must be triplet|cross_entropy, got '" + s + "'");
}

enum class LabelLevel { kSubcategory, kCategory };

inline const char* LabelLevelName(LabelLevel l) {
  return l == LabelLevel::kSubcategory ? "subcategory" : "category";
}

inline LabelLevel ParseLabelLevel(const std::string& s) {
  if (s == "subcategory") return LabelLevel::kSubcategory;
  if (s == "category") return LabelLevel::kCategory;
  throw Error(ErrorKind::kParameter,
              "label level must be subcategory|category, got '" + s + "'");
}

// Fully connected layer on top of the fused embedding.
template <class T>
struct ClassifierHead {
  Matrix<T> w;  // n_classes x dim
  Vector<T> b;

  static ClassifierHead Zeros(std::size_t n_classes, std::size_t dim) {
    return {Matrix<T>(n_classes, dim), Vector<T>(n_classes, T(0))};
  }

  static ClassifierHead Init(std::size_t n_classes, std::size_t dim,
                             std::uint64_t seed) {
    ClassifierHead h = Zeros(n_classes, dim);
    Rng rng(DeriveSeed(seed, 0xC1Au));
    const double bound = GlorotBound(dim, n_classes);
    for (T& v : h.w.flat()) v = static_cast<T>(rng.Uniform(-bound, bound));
    return h;
  }

  std::size_t n_classes() const { return w.rows(); }

  std::vector<TensorRef<T>> Tensors() {
    return {{"w_cls", w.flat()}, {"b_cls", b}};
  }

  Vector<T> Logits(std::span<const T> emb) const {
    return LinearForward<T>(w, b, emb);
  }

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

template <class T>
struct BatchGradients {
  double loss = 0.0;
  ParamGrads<T> fusion;
  std::optional<ClassifierHead<T>> head;
  TripletBatch triplets;
  std::size_t active = 0;
  bool empty = false;
};

template <class T>
std::vector<ForwardTrace<T>> ForwardBatch(const FusionParams<T>& params,
                                          const Matrix<T>& images,
                                          const Matrix<T>& texts,
                                          Matrix<T>* embeddings) {
  if (images.rows() != texts.rows()) {
    throw Error(ErrorKind::kShape, "batch has " + std::to_string(images.rows()) +
                                       " images but " +
                                       std::to_string(texts.rows()) + " texts");
  }
  std::vector<ForwardTrace<T>> traces;
  traces.reserve(images.rows());
  *embeddings = Matrix<T>(images.rows(), params.config.dim_image);
  for (std::size_t i = 0; i < images.rows(); ++i) {
    traces.push_back(FusionForward<T>(params, images.row(i), texts.row(i)));
    std::copy(traces.back().output.begin(), traces.back().output.end(),
              embeddings->row(i).begin());
  }
  return traces;
}

// Triplet objective on one batch. If `fixed` is given it is used instead of
// mining, which lets finite-difference checks hold the triplet set constant.
template <class T>
BatchGradients<T> TripletBatchGradients(const FusionParams<T>& params,
                                        const Matrix<T>& images,
                                        const Matrix<T>& texts,
                                        std::span<const int> labels,
                                        double margin, MiningStrategy mining,
                                        std::uint64_t seed,
                                        const TripletBatch* fixed = nullptr) {
  BatchGradients<T> out{0.0, params.ZerosLike(), std::nullopt, {}, 0, false};
  Matrix<T> emb;
  const auto traces = ForwardBatch(params, images, texts, &emb);
  out.triplets = fixed ? *fixed : MineTriplets(emb, labels, margin, mining, seed);
  const LossResult<T> loss = TripletLoss(emb, out.triplets, margin);
  out.loss = loss.loss;
  out.active = loss.active;
  out.empty = loss.empty;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    FusionBackwardAccumulate<T>(traces[i], params, loss.grad.row(i), out.fusion);
  }
  return out;
}

template <class T>
double TripletBatchLoss(const FusionParams<T>& params, const Matrix<T>& images,
                        const Matrix<T>& texts, const TripletBatch& triplets,
                        double margin) {
  Matrix<T> emb;
  ForwardBatch(params, images, texts, &emb);
  return TripletLoss(emb, triplets, margin).loss;
}

template <class T>
Matrix<T> HeadLogits(const ClassifierHead<T>& head, const Matrix<T>& emb) {
  Matrix<T> logits(emb.rows(), head.n_classes());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const Vector<T> row = head.Logits(emb.row(i));
    std::copy(row.begin(), row.end(), logits.row(i).begin());
  }
  return logits;
}

template <class T>
BatchGradients<T> CrossEntropyBatchGradients(const FusionParams<T>& params,
                                             const ClassifierHead<T>& head,
                                             const Matrix<T>& images,
                                             const Matrix<T>& texts,
                                             std::span<const int> labels) {
  BatchGradients<T> out{0.0, params.ZerosLike(),
                        ClassifierHead<T>::Zeros(head.n_classes(), head.w.cols()),
                        {}, 0, false};
  Matrix<T> emb;
  const auto traces = ForwardBatch(params, images, texts, &emb);
  const LossResult<T> loss = CrossEntropyLoss(HeadLogits(head, emb), labels);
  out.loss = loss.loss;
  out.active = loss.active;
  out.empty = loss.empty;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Vector<T> d_emb =
        LinearBackward<T>(head.w, emb.row(i), loss.grad.row(i), out.head->w, out.head->b);
    FusionBackwardAccumulate<T>(traces[i], params, d_emb, out.fusion);
  }
  return out;
}

template <class T>
double CrossEntropyBatchLoss(const FusionParams<T>& params,
                             const ClassifierHead<T>& head,
                             const Matrix<T>& images, const Matrix<T>& texts,
                             std::span<const int> labels) {
  Matrix<T> emb;
  ForwardBatch(params, images, texts, &emb);
  return CrossEntropyLoss(HeadLogits(head, emb), labels).loss;
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
  Objective objective = Objective::kTriplet;
  double margin = 0.2;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  OptimizerConfig optimizer;  // Adam, lr 1e-3
  std::uint64_t seed = 0;
  MiningStrategy mining = MiningStrategy::kSemiHard;
  LabelLevel label_level = LabelLevel::kSubcategory;
  GateVariant gate = GateVariant::kProduct;
  bool l2_normalize_output = false;
  std::size_t hidden = 0;   // 0: same as the image dim
  std::size_t hidden2 = 0;  // 0: same as the image dim

  void Validate() const {
    if (!(margin > 0.0)) {
      throw Error(ErrorKind::kParameter, "margin must be > 0");
    }
    if (batch_size < 2) {
      throw Error(ErrorKind::kParameter, "batch_size must be >= 2");
    }
    if (!(optimizer.learning_rate > 0.0)) {
      throw Error(ErrorKind::kParameter, "learning rate must be > 0");
    }
  }
};

struct TrainResult {
  FusionParams<float> params;
  std::optional<ClassifierHead<float>> head;
  std::vector<std::string> class_names;  // head output order
  std::vector<double> losses;            // one per step
  std::uint64_t steps_taken = 0;
};

inline std::vector<int> RecordLabels(std::span<const EmbeddingRecord> records,
                                     const LabelSpace& space, LabelLevel level) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) {
    labels.push_back(level == LabelLevel::kSubcategory
                         ? space.SubcategoryId(r.subcategory)
                         : space.CategoryId(r.category));
  }
  return labels;
}

inline FusionConfig FusionConfigFor(const Dataset& ds, const TrainConfig& cfg) {
  FusionConfig fc = FusionConfig::ForDims(ds.dim_image, ds.dim_text);
  if (cfg.hidden) fc.hidden = cfg.hidden;
  if (cfg.hidden2) fc.hidden2 = cfg.hidden2;
  fc.gate = cfg.gate;
  fc.l2_normalize_output = cfg.l2_normalize_output;
  return fc;
}

inline TrainResult Train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.Validate();
  std::vector<EmbeddingRecord> train;
  for (const auto& r : ds.records) {
    if (r.split == Split::kTrain) train.push_back(r);
  }
  if (train.empty()) {
    throw Error(ErrorKind::kData, "dataset has no records in the train split");
  }
  const LabelSpace space = LabelSpace::FromRecords(ds.records);
  const std::vector<int> labels = RecordLabels(train, space, cfg.label_level);

  TrainResult result;
  result.params = FusionParams<float>::Init(FusionConfigFor(ds, cfg), cfg.seed);
  if (cfg.objective == Objective::kCrossEntropy) {
    result.class_names = cfg.label_level == LabelLevel::kSubcategory
                             ? space.subcategories
                             : space.categories;
    result.head = ClassifierHead<float>::Init(
        result.class_names.size(), result.params.config.dim_image, cfg.seed);
  }

  OptimizerState opt(cfg.optimizer);
  Rng order_rng(DeriveSeed(cfg.seed, 0xBA7Cu));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng.Shuffle(std::span<std::size_t>(order));
  std::size_t cursor = 0;
  const std::size_t batch = std::min(cfg.batch_size, train.size());

  Matrix<float> images(batch, ds.dim_image);
  Matrix<float> texts(batch, ds.dim_text);
  std::vector<int> batch_labels(batch);
  std::vector<std::size_t> batch_idx(batch);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor + batch > order.size()) {
      order_rng.Shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t idx = order[cursor + i];
      batch_idx[i] = idx;
      std::copy(train[idx].image_vec.begin(), train[idx].image_vec.end(),
                images.row(i).begin());
      std::copy(train[idx].text_vec.begin(), train[idx].text_vec.end(),
                texts.row(i).begin());
      batch_labels[i] = labels[idx];
    }
    cursor += batch;

    BatchGradients<float> g;
    if (cfg.objective == Objective::kTriplet) {
      const std::set<int> classes(batch_labels.begin(), batch_labels.end());
      if (classes.size() < 2) {
        result.losses.push_back(0.0);
        continue;
      }
      g = TripletBatchGradients<float>(result.params, images, texts, batch_labels,
                                       cfg.margin, cfg.mining,
                                       DeriveSeed(cfg.seed, 0x10000u + step));
    } else {
      g = CrossEntropyBatchGradients<float>(result.params, *result.head, images,
                                            texts, batch_labels);
    }
    if (!std::isfinite(g.loss)) {
      std::ostringstream ids;
      for (std::size_t i = 0; i < batch; ++i) {
        ids << (i ? "," : "") << train[batch_idx[i]].id;
      }
      throw Error(ErrorKind::kTraining, "non-finite loss at step " +
                                            std::to_string(step) +
                                            "; batch ids: " + ids.str());
    }
    result.losses.push_back(g.loss);

    auto params = result.params.Tensors();
    auto grads = g.fusion.Tensors();
    if (result.head) {
      for (auto& t : result.head->Tensors()) params.push_back(t);
      for (auto& t : g.head->Tensors()) grads.push_back(t);
    }
    opt.Step(params, grads);
  }
  result.steps_taken = opt.step();
  return result;
}

inline std::string LossCurveCsv(std::span<const double> losses) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, losses[i]);
    out += buf;
  }
  return out;
}

}  // namespace cardfuse

#endif  // CARDFUSE_TRAINER_HPP_
