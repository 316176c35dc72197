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

#ifndef CARDFUSE_REPORT_HPP_
#define CARDFUSE_REPORT_HPP_

#include <algorithm>
#include <cstdio>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/knn.hpp"

namespace cardfuse {

struct ReportMeta {
  std::size_t k = 20;
  std::string metric = "euclidean";
  std::string label_level = "subcategory";
};

inline nlohmann::ordered_json ReportToJson(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["classifier"] = r.classifier;
  j["k"] = r.k;
  j["n_test"] = r.n_test;
  j["per_subcategory"] = nlohmann::ordered_json::object();
  for (const auto& [name, acc] : r.per_subcategory) j["per_subcategory"][name] = acc;
  j["per_category"] = nlohmann::ordered_json::object();
  for (const auto& [name, acc] : r.per_category) j["per_category"][name] = acc;
  j["overall"] = r.overall;
  j["warnings"] = r.warnings;
  return j;
}

inline std::string ReportsToJson(std::span<const EvalReport> reports,
                                 const ReportMeta& meta) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kFormatVersion;
  doc["k"] = meta.k;
  doc["metric"] = meta.metric;
  doc["label_level"] = meta.label_level;
  doc["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) doc["reports"].push_back(ReportToJson(r));
  return doc.dump(2) + "\n";
}

inline std::vector<EvalReport> ReportsFromJson(const std::string& text) {
  std::vector<EvalReport> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& j : doc.at("reports")) {
      EvalReport r;
      r.mode = j.at("mode").get<std::string>();
      r.classifier = j.at("classifier").get<std::string>();
      r.k = j.at("k").get<std::size_t>();
      r.n_test = j.at("n_test").get<std::size_t>();
      for (const auto& [name, acc] : j.at("per_subcategory").items()) {
        r.per_subcategory[name] = acc.get<double>();
      }
      for (const auto& [name, acc] : j.at("per_category").items()) {
        r.per_category[name] = acc.get<double>();
      }
      r.overall = j.at("overall").get<double>();
      r.warnings = j.at("warnings").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("report: ") + e.what());
  }
  return out;
}

// Accuracy table in percent: one row per category plus an "Average" row, one
// column per report.
inline std::string ReportsToTable(std::span<const EvalReport> reports) {
  std::set<std::string> categories;
  for (const auto& r : reports) {
    for (const auto& [name, acc] : r.per_category) categories.insert(name);
  }
  std::size_t label_width = std::string("Category").size();
  for (const auto& c : categories) label_width = std::max(label_width, c.size());
  std::vector<std::string> headers;
  for (const auto& r : reports) headers.push_back(r.mode);
  std::size_t col_width = 8;
  for (const auto& h : headers) col_width = std::max(col_width, h.size() + 2);

  auto cell = [&](const std::string& s) {
    std::string out(col_width > s.size() ? col_width - s.size() : 0, ' ');
    return out + s;
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return std::string(buf);
  };
  auto label = [&](const std::string& s) {
    return s + std::string(label_width - s.size(), ' ');
  };

  std::string out = label("Category");
  for (const auto& h : headers) out += cell(h);
  out += "\n";
  for (const auto& c : categories) {
    std::string line = label(c);
    for (const auto& r : reports) {
      auto it = r.per_category.find(c);
      line += cell(it == r.per_category.end() ? "-" : pct(it->second));
    }
    out += line + "\n";
  }
  std::string line = label("Average");
  for (const auto& r : reports) line += cell(pct(r.overall));
  out += line + "\n";
  return out;
}

// Reference kNN (k = 20) accuracies on a proprietary greeting-card dataset,
// for pretrained image, sentence and normalized-concatenation embeddings, and
// for the end-to-end trained fused embedding. Not reproducible without that
// data; kept as formatting fixtures.
struct ReferenceColumn {
  const char* mode;
  double holidays;
  double special_occasions;
  double messages;
  double average;
};

inline constexpr ReferenceColumn kPretrainedReference[] = {
    {"image", 70.12, 47.17, 48.79, 55.36},
    {"text", 75.3, 54.7, 63.57, 64.5},
    {"concat", 77.7, 58.5, 66.0, 67.4},
};

inline constexpr ReferenceColumn kTrainedFusedReference = {
    "fused", 85.12, 79.25, 73.05, 79.14};

inline EvalReport ReferenceReport(const ReferenceColumn& col) {
  EvalReport r;
  r.mode = col.mode;
  r.k = 20;
  r.per_category = {{"Holidays", col.holidays / 100.0},
                    {"Messages", col.messages / 100.0},
                    {"Special Occasions", col.special_occasions / 100.0}};
  r.overall = col.average / 100.0;
  return r;
}

}  // namespace cardfuse

#endif  // CARDFUSE_REPORT_HPP_
