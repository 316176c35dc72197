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

#ifndef CARDFUSE_EMBEDDING_STORE_HPP_
#define CARDFUSE_EMBEDDING_STORE_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardfuse/error.hpp"
#include "cardfuse/random.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse {

inline constexpr int kFormatVersion = 1;

enum class Split { kUnassigned, kTrain, kTest };

inline const char* SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "none";
  }
  return "none";
}

struct EmbeddingRecord {
  std::string id;
  std::vector<float> image_vec;
  std::vector<float> text_vec;
  std::string category;
  std::string subcategory;
  Split split = Split::kUnassigned;

  friend bool operator==(const EmbeddingRecord&,
                         const EmbeddingRecord&) = default;
};

struct Dataset {
  std::size_t dim_image = 0;
  std::size_t dim_text = 0;
  std::vector<EmbeddingRecord> records;

  std::size_t record_bytes() const { return 4 * (dim_image + dim_text); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// One manifest entry; vectors live in the blob at `offset`.
struct ManifestEntry {
  std::string id;
  std::string category;
  std::string subcategory;
  Split split = Split::kUnassigned;
  std::uint64_t offset = 0;
};

struct DatasetManifest {
  int format_version = kFormatVersion;
  std::size_t dim_image = 0;
  std::size_t dim_text = 0;
  std::vector<ManifestEntry> records;
};

// ---------------------------------------------------------------------------
// Labels.

// Dense integer ids for subcategories and categories. Names are sorted so the
// ids depend only on the label set, not on record order.
struct LabelSpace {
  std::vector<std::string> subcategories;
  std::vector<std::string> categories;
  std::vector<int> category_of_subcategory;

  static LabelSpace FromRecords(std::span<const EmbeddingRecord> records) {
    std::map<std::string, std::string> parent;
    for (const auto& r : records) {
      auto [it, inserted] = parent.emplace(r.subcategory, r.category);
      if (!inserted && it->second != r.category) {
        throw Error(ErrorKind::kData, "subcategory '" + r.subcategory +
                                          "' appears under categories '" +
                                          it->second + "' and '" + r.category +
                                          "'");
      }
    }
    LabelSpace space;
    std::set<std::string> cats;
    for (const auto& [sub, cat] : parent) {
      space.subcategories.push_back(sub);
      cats.insert(cat);
    }
    space.categories.assign(cats.begin(), cats.end());
    for (const auto& [sub, cat] : parent) {
      space.category_of_subcategory.push_back(static_cast<int>(
          std::lower_bound(space.categories.begin(), space.categories.end(),
                           cat) -
          space.categories.begin()));
    }
    return space;
  }

  int SubcategoryId(const std::string& name) const {
    auto it = std::lower_bound(subcategories.begin(), subcategories.end(), name);
    if (it == subcategories.end() || *it != name) {
      throw Error(ErrorKind::kData, "unknown subcategory '" + name + "'");
    }
    return static_cast<int>(it - subcategories.begin());
  }

  int CategoryId(const std::string& name) const {
    auto it = std::lower_bound(categories.begin(), categories.end(), name);
    if (it == categories.end() || *it != name) {
      throw Error(ErrorKind::kData, "unknown category '" + name + "'");
    }
    return static_cast<int>(it - categories.begin());
  }
};

// ---------------------------------------------------------------------------
// Manifest + blob I/O.

namespace detail {

inline Split ParseSplit(const std::string& s, std::size_t record_index) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "none") return Split::kUnassigned;
  throw Error(ErrorKind::kParse, "records[" + std::to_string(record_index) +
                                     "].split: expected train|test|none, got '" +
                                     s + "'");
}

inline std::size_t LineOfByte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

template <class V>
V RequireField(const nlohmann::json& obj, const char* key,
               const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorKind::kParse, where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::kParse,
                where + ": field '" + key + "' has the wrong type");
  }
}

inline void AppendFloatLE(std::string& out, float value) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  for (int b = 0; b < 4; ++b) {
    out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
}

inline float ReadFloatLE(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

inline std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void WriteFile(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to '" + path + "'");
}

}  // namespace detail

inline DatasetManifest ParseManifest(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse,
                "manifest line " + std::to_string(detail::LineOfByte(text, e.byte)) +
                    ": " + e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorKind::kParse, "manifest line 1: top level must be an object");
  }
  DatasetManifest m;
  m.format_version = detail::RequireField<int>(doc, "format_version", "manifest");
  if (m.format_version != kFormatVersion) {
    throw Error(ErrorKind::kParse, "manifest: unsupported format_version " +
                                       std::to_string(m.format_version));
  }
  m.dim_image = detail::RequireField<std::size_t>(doc, "dim_image", "manifest");
  m.dim_text = detail::RequireField<std::size_t>(doc, "dim_text", "manifest");
  if (m.dim_image == 0 || m.dim_text == 0) {
    throw Error(ErrorKind::kParse, "manifest: dim_image and dim_text must be > 0");
  }
  if (!doc.contains("records") || !doc["records"].is_array()) {
    throw Error(ErrorKind::kParse, "manifest: field 'records' must be an array");
  }
  const auto& recs = doc["records"];
  m.records.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string where = "manifest records[" + std::to_string(i) + "]";
    ManifestEntry e;
    e.id = detail::RequireField<std::string>(recs[i], "id", where);
    e.category = detail::RequireField<std::string>(recs[i], "category", where);
    e.subcategory = detail::RequireField<std::string>(recs[i], "subcategory", where);
    e.split = detail::ParseSplit(
        detail::RequireField<std::string>(recs[i], "split", where), i);
    e.offset = detail::RequireField<std::uint64_t>(recs[i], "offset", where);
    if (e.id.empty() || e.category.empty() || e.subcategory.empty()) {
      throw Error(ErrorKind::kParse,
                  where + ": id, category and subcategory must be non-empty");
    }
    m.records.push_back(std::move(e));
  }
  return m;
}

// Serializes the manifest with a fixed key order and indentation so equal
// datasets produce equal bytes.
inline std::string ManifestToJson(const Dataset& ds) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kFormatVersion;
  doc["dim_image"] = ds.dim_image;
  doc["dim_text"] = ds.dim_text;
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  const std::uint64_t stride = ds.record_bytes();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    nlohmann::ordered_json e;
    e["id"] = r.id;
    e["category"] = r.category;
    e["subcategory"] = r.subcategory;
    e["split"] = SplitName(r.split);
    e["offset"] = stride * i;
    recs.push_back(std::move(e));
  }
  doc["records"] = std::move(recs);
  return doc.dump(2) + "\n";
}

inline std::string BlobBytes(const Dataset& ds) {
  std::string out;
  out.reserve(ds.records.size() * ds.record_bytes());
  for (const auto& r : ds.records) {
    for (float v : r.image_vec) detail::AppendFloatLE(out, v);
    for (float v : r.text_vec) detail::AppendFloatLE(out, v);
  }
  return out;
}

// Checks every record against the dataset invariants: declared dims, finite
// values, non-empty labels, unique ids, one category per subcategory.
inline void ValidateDataset(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& r : ds.records) {
    if (r.image_vec.size() != ds.dim_image || r.text_vec.size() != ds.dim_text) {
      throw Error(ErrorKind::kShape,
                  "record '" + r.id + "' has image" +
                      ShapeString(r.image_vec.size()) + " text" +
                      ShapeString(r.text_vec.size()) + ", dataset declares image" +
                      ShapeString(ds.dim_image) + " text" +
                      ShapeString(ds.dim_text));
    }
    for (std::size_t i = 0; i < r.image_vec.size(); ++i) {
      if (!std::isfinite(r.image_vec[i])) {
        throw Error(ErrorKind::kData, "record '" + r.id +
                                          "': non-finite value at index " +
                                          std::to_string(i) + " (image_vec)");
      }
    }
    for (std::size_t i = 0; i < r.text_vec.size(); ++i) {
      if (!std::isfinite(r.text_vec[i])) {
        throw Error(ErrorKind::kData,
                    "record '" + r.id + "': non-finite value at index " +
                        std::to_string(ds.dim_image + i) + " (text_vec[" +
                        std::to_string(i) + "])");
      }
    }
    if (r.id.empty() || r.category.empty() || r.subcategory.empty()) {
      throw Error(ErrorKind::kData, "record '" + r.id + "' has an empty label");
    }
    if (!ids.insert(r.id).second) {
      throw Error(ErrorKind::kData, "duplicate record id '" + r.id + "'");
    }
  }
  LabelSpace::FromRecords(ds.records);
}

// Materializes a dataset from an already-parsed manifest and raw blob bytes.
inline Dataset DatasetFromBytes(const DatasetManifest& m, std::string_view blob) {
  Dataset ds;
  ds.dim_image = m.dim_image;
  ds.dim_text = m.dim_text;
  const std::uint64_t stride = ds.record_bytes();
  const std::uint64_t expected = stride * m.records.size();
  if (blob.size() != expected) {
    throw Error(ErrorKind::kSize, "blob has " + std::to_string(blob.size()) +
                                      " bytes, manifest describes " +
                                      std::to_string(expected));
  }
  ds.records.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& e = m.records[i];
    // Records are packed back to back in manifest order.
    if (e.offset != stride * i) {
      throw Error(ErrorKind::kParse,
                  "manifest records[" + std::to_string(i) + "].offset is " +
                      std::to_string(e.offset) + ", expected " +
                      std::to_string(stride * i));
    }
    EmbeddingRecord r;
    r.id = e.id;
    r.category = e.category;
    r.subcategory = e.subcategory;
    r.split = e.split;
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + e.offset;
    r.image_vec.resize(ds.dim_image);
    r.text_vec.resize(ds.dim_text);
    for (std::size_t j = 0; j < ds.dim_image; ++j, p += 4) {
      r.image_vec[j] = detail::ReadFloatLE(p);
    }
    for (std::size_t j = 0; j < ds.dim_text; ++j, p += 4) {
      r.text_vec[j] = detail::ReadFloatLE(p);
    }
    ds.records.push_back(std::move(r));
  }
  ValidateDataset(ds);
  return ds;
}

inline Dataset LoadDataset(const std::string& manifest_path,
                           const std::string& blob_path) {
  const DatasetManifest m = ParseManifest(detail::ReadFile(manifest_path));
  const std::string blob = detail::ReadFile(blob_path);
  return DatasetFromBytes(m, blob);
}

inline void SaveDataset(const Dataset& ds, const std::string& manifest_path,
                        const std::string& blob_path) {
  ValidateDataset(ds);
  detail::WriteFile(blob_path, BlobBytes(ds));
  detail::WriteFile(manifest_path, ManifestToJson(ds));
}

// ---------------------------------------------------------------------------
// Stratified split.

struct SplitConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitReport {
  struct Counts {
    std::string subcategory;
    std::size_t train = 0;
    std::size_t test = 0;
  };
  std::vector<Counts> per_subcategory;  // sorted by subcategory name
  std::vector<std::string> warnings;
};

// Number of training records for a subcategory of size n: ceil(fraction*n),
// kept at most n-1 so every subcategory with two or more records is
// represented in the test split.
inline std::size_t TrainCount(std::size_t n, double train_fraction) {
  if (n <= 1) return n;
  auto count = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(count, 1, n - 1);
}

inline SplitReport StratifiedSplit(std::vector<EmbeddingRecord>& records,
                                   const SplitConfig& cfg) {
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw Error(ErrorKind::kParameter,
                "train_fraction must lie in (0, 1), got " +
                    std::to_string(cfg.train_fraction));
  }
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    members[records[i].subcategory].push_back(i);
  }
  SplitReport report;
  Rng rng(DeriveSeed(cfg.seed, 0x5071u));
  for (auto& [sub, idx] : members) {
    rng.Shuffle(std::span<std::size_t>(idx));
    const std::size_t n_train = TrainCount(idx.size(), cfg.train_fraction);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      records[idx[j]].split = j < n_train ? Split::kTrain : Split::kTest;
    }
    if (idx.size() < 2) {
      report.warnings.push_back("subcategory '" + sub + "' has " +
                                std::to_string(idx.size()) +
                                " record; forced into train");
    }
    report.per_subcategory.push_back({sub, n_train, idx.size() - n_train});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Normalized concatenation.

inline std::vector<float> NormalizeConcat(std::span<const float> image_vec,
                                          std::span<const float> text_vec) {
  const double ni = L2Norm(image_vec);
  const double nt = L2Norm(text_vec);
  if (!(ni > 0.0)) {
    throw Error(ErrorKind::kData, "cannot normalize zero image vector");
  }
  if (!(nt > 0.0)) {
    throw Error(ErrorKind::kData, "cannot normalize zero text vector");
  }
  std::vector<float> out;
  out.reserve(image_vec.size() + text_vec.size());
  for (float v : image_vec) out.push_back(static_cast<float>(v / ni));
  for (float v : text_vec) out.push_back(static_cast<float>(v / nt));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data.
//
// Within each category the subcategories are partitioned into coarse groups
// of ceil(subcats/2). Every member of a group shares one image centroid, so
// the image alone only identifies the group. Text centroids are built from a
// direction shared by the same position in every group plus a weaker
// subcategory-specific direction, so text alone is ambiguous across groups.
// Only the (image, text) pair identifies the subcategory.

struct SynthConfig {
  std::size_t n_per_subcat = 50;
  std::size_t n_categories = 3;
  std::size_t n_subcats_per_cat = 4;
  std::size_t dim = 64;
  double noise_sigma = 0.3;
  double text_specificity = 1.0;
  // Low-rank part of the noise: `style_rank` shared directions per modality,
  // each drawn with standard deviation noise_sigma * style_scale.
  std::size_t style_rank = 4;
  double style_scale = 3.0;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
};

namespace detail {

inline std::vector<double> RandomUnitVector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    for (auto& x : v) x = rng.Normal();
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  } while (norm == 0.0);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace detail

inline std::string SynthCategoryName(std::size_t c) {
  return "cat" + std::to_string(c);
}

inline std::string SynthSubcategoryName(std::size_t c, std::size_t s) {
  return "cat" + std::to_string(c) + "-sub" + std::to_string(s);
}

inline Dataset SynthGenerate(const SynthConfig& cfg) {
  if (cfg.n_per_subcat < 1 || cfg.n_categories < 1 ||
      cfg.n_subcats_per_cat < 1 || cfg.dim < 1) {
    throw Error(ErrorKind::kParameter,
                "synthetic generator counts and dim must all be >= 1");
  }
  if (!(cfg.noise_sigma >= 0.0) || !(cfg.text_specificity >= 0.0) ||
      !(cfg.style_scale >= 0.0)) {
    throw Error(ErrorKind::kParameter,
                "noise_sigma, text_specificity and style_scale must be >= 0");
  }
  Rng centroid_rng(DeriveSeed(cfg.seed, 0xC3u));
  Rng noise_rng(DeriveSeed(cfg.seed, 0x401u));

  const std::size_t group_size = (cfg.n_subcats_per_cat + 1) / 2;
  const std::size_t groups_per_cat =
      (cfg.n_subcats_per_cat + group_size - 1) / group_size;

  std::vector<std::vector<double>> image_style, text_style;
  for (std::size_t k = 0; k < cfg.style_rank; ++k) {
    image_style.push_back(detail::RandomUnitVector(centroid_rng, cfg.dim));
    text_style.push_back(detail::RandomUnitVector(centroid_rng, cfg.dim));
  }
  std::vector<double> noise(cfg.dim);
  const auto draw_noise = [&](const std::vector<std::vector<double>>& style) {
    for (auto& x : noise) x = cfg.noise_sigma * noise_rng.Normal();
    for (const auto& dir : style) {
      const double z = cfg.noise_sigma * cfg.style_scale * noise_rng.Normal();
      for (std::size_t j = 0; j < cfg.dim; ++j) noise[j] += z * dir[j];
    }
  };

  std::vector<std::vector<double>> position_dirs;
  for (std::size_t p = 0; p < group_size; ++p) {
    position_dirs.push_back(detail::RandomUnitVector(centroid_rng, cfg.dim));
  }

  Dataset ds;
  ds.dim_image = cfg.dim;
  ds.dim_text = cfg.dim;
  std::size_t next_id = 0;
  for (std::size_t c = 0; c < cfg.n_categories; ++c) {
    std::vector<std::vector<double>> group_centroids;
    for (std::size_t g = 0; g < groups_per_cat; ++g) {
      group_centroids.push_back(detail::RandomUnitVector(centroid_rng, cfg.dim));
    }
    for (std::size_t s = 0; s < cfg.n_subcats_per_cat; ++s) {
      const auto& image_centroid = group_centroids[s / group_size];
      const auto specific = detail::RandomUnitVector(centroid_rng, cfg.dim);
      std::vector<double> text_centroid(cfg.dim);
      double norm = 0.0;
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        text_centroid[j] = position_dirs[s % group_size][j] +
                           cfg.text_specificity * specific[j];
        norm += text_centroid[j] * text_centroid[j];
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (auto& x : text_centroid) x /= norm;
      }
      for (std::size_t n = 0; n < cfg.n_per_subcat; ++n) {
        EmbeddingRecord r;
        char id[32];
        std::snprintf(id, sizeof(id), "syn-%06zu", next_id++);
        r.id = id;
        r.category = SynthCategoryName(c);
        r.subcategory = SynthSubcategoryName(c, s);
        r.image_vec.resize(cfg.dim);
        r.text_vec.resize(cfg.dim);
        draw_noise(image_style);
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          r.image_vec[j] = static_cast<float>(image_centroid[j] + noise[j]);
        }
        draw_noise(text_style);
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          r.text_vec[j] = static_cast<float>(text_centroid[j] + noise[j]);
        }
        ds.records.push_back(std::move(r));
      }
    }
  }
  StratifiedSplit(ds.records, {cfg.train_fraction, cfg.seed});
  return ds;
}

}  // namespace cardfuse

#endif  // CARDFUSE_EMBEDDING_STORE_HPP_
