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

#ifndef CARDFUSE_CHECKPOINT_HPP_
#define CARDFUSE_CHECKPOINT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/fusion.hpp"
#include "cardfuse/trainer.hpp"

namespace cardfuse {

// A checkpoint is a JSON header plus a blob of little-endian float32 values.
// The blob holds the fusion tensors in FusionParams::Tensors() order
// (w_lin, b_lin, w_im1, b_im1, w_t1, b_t1, w_t2, b_t2, w_r, w_d), followed by
// w_cls and b_cls when a classifier head is present. Matrices are row-major.
// The header lists every tensor with its shape and byte offset.
struct Checkpoint {
  FusionParams<float> params;
  std::optional<ClassifierHead<float>> head;
  std::vector<std::string> class_names;
  LabelLevel label_level = LabelLevel::kSubcategory;
  Objective objective = Objective::kTriplet;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

namespace detail {

struct TensorLayout {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

inline std::vector<TensorLayout> CheckpointLayout(const FusionConfig& c,
                                                  std::size_t n_classes) {
  std::vector<TensorLayout> l = {
      {"w_lin", c.hidden, c.dim_image + c.dim_text},
      {"b_lin", c.hidden, 1},
      {"w_im1", c.dim_image, c.hidden},
      {"b_im1", c.dim_image, 1},
      {"w_t1", c.hidden2, c.hidden},
      {"b_t1", c.hidden2, 1},
      {"w_t2", c.dim_image, c.hidden2},
      {"b_t2", c.dim_image, 1},
      {"w_r", 1, 1},
      {"w_d", 1, 1},
  };
  if (n_classes) {
    l.push_back({"w_cls", n_classes, c.dim_image});
    l.push_back({"b_cls", n_classes, 1});
  }
  return l;
}

}  // namespace detail

inline std::string CheckpointHeaderJson(const Checkpoint& ck) {
  const FusionConfig& c = ck.params.config;
  const std::size_t n_classes = ck.head ? ck.head->n_classes() : 0;
  nlohmann::ordered_json doc;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = "cardfuse-checkpoint";
  doc["dims"] = {{"image", c.dim_image},
                 {"text", c.dim_text},
                 {"hidden", c.hidden},
                 {"hidden2", c.hidden2}};
  doc["gate_variant"] = GateVariantName(c.gate);
  doc["l2_normalize_output"] = c.l2_normalize_output;
  doc["objective"] = ObjectiveName(ck.objective);
  doc["label_level"] = LabelLevelName(ck.label_level);
  doc["seed"] = ck.seed;
  doc["step"] = ck.step;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : detail::CheckpointLayout(c, n_classes)) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"offset", offset}});
    offset += 4ull * t.rows * t.cols;
  }
  doc["tensors"] = std::move(tensors);
  doc["classes"] = ck.class_names;
  return doc.dump(2) + "\n";
}

inline std::string CheckpointBlob(Checkpoint ck) {
  std::string out;
  for (const auto& t : ck.params.Tensors()) {
    for (float v : t.values) detail::AppendFloatLE(out, v);
  }
  if (ck.head) {
    for (const auto& t : ck.head->Tensors()) {
      for (float v : t.values) detail::AppendFloatLE(out, v);
    }
  }
  return out;
}

inline void SaveCheckpoint(const Checkpoint& ck, const std::string& header_path,
                           const std::string& blob_path) {
  detail::WriteFile(blob_path, CheckpointBlob(ck));
  detail::WriteFile(header_path, CheckpointHeaderJson(ck));
}

inline Checkpoint CheckpointFromBytes(const std::string& header_text,
                                      std::string_view blob) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse,
                "checkpoint header line " +
                    std::to_string(detail::LineOfByte(header_text, e.byte)) +
                    ": " + e.what());
  }
  const std::string where = "checkpoint header";
  if (detail::RequireField<int>(doc, "format_version", where) != kFormatVersion ||
      detail::RequireField<std::string>(doc, "kind", where) != "cardfuse-checkpoint") {
    throw Error(ErrorKind::kParse, where + ": not a version 1 cardfuse checkpoint");
  }
  const auto dims = doc.contains("dims") ? doc["dims"] : nlohmann::json();
  FusionConfig c;
  c.dim_image = detail::RequireField<std::size_t>(dims, "image", where + " dims");
  c.dim_text = detail::RequireField<std::size_t>(dims, "text", where + " dims");
  c.hidden = detail::RequireField<std::size_t>(dims, "hidden", where + " dims");
  c.hidden2 = detail::RequireField<std::size_t>(dims, "hidden2", where + " dims");
  c.gate = ParseGateVariant(detail::RequireField<std::string>(doc, "gate_variant", where));
  c.l2_normalize_output = detail::RequireField<bool>(doc, "l2_normalize_output", where);

  Checkpoint ck;
  ck.objective = ParseObjective(detail::RequireField<std::string>(doc, "objective", where));
  ck.label_level = ParseLabelLevel(detail::RequireField<std::string>(doc, "label_level", where));
  ck.seed = detail::RequireField<std::uint64_t>(doc, "seed", where);
  ck.step = detail::RequireField<std::uint64_t>(doc, "step", where);
  ck.class_names = detail::RequireField<std::vector<std::string>>(doc, "classes", where);
  ck.params = FusionParams<float>::Zeros(c);
  if (!ck.class_names.empty()) {
    ck.head = ClassifierHead<float>::Zeros(ck.class_names.size(), c.dim_image);
  }

  auto tensors = ck.params.Tensors();
  if (ck.head) {
    for (auto& t : ck.head->Tensors()) tensors.push_back(t);
  }
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.values.size();
  if (blob.size() != 4 * total) {
    throw Error(ErrorKind::kSize, "checkpoint blob has " + std::to_string(blob.size()) +
                                      " bytes, header describes " +
                                      std::to_string(4 * total));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  for (auto& t : tensors) {
    for (float& v : t.values) {
      v = detail::ReadFloatLE(p);
      p += 4;
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kData, "checkpoint tensor '" + t.name +
                                          "' contains a non-finite value");
      }
    }
  }
  return ck;
}

inline Checkpoint LoadCheckpoint(const std::string& header_path,
                                 const std::string& blob_path) {
  return CheckpointFromBytes(detail::ReadFile(header_path),
                             detail::ReadFile(blob_path));
}

}  // namespace cardfuse

#endif  // CARDFUSE_CHECKPOINT_HPP_
