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

#include "cardfuse/report.hpp"

#include <sstream>

#include <gtest/gtest.h>

namespace cardfuse {
namespace {

EvalReport Sample(const std::string& mode, double a, double b) {
  EvalReport r;
  r.mode = mode;
  r.k = 20;
  r.n_test = 7;
  r.per_subcategory = {{"a1", a}, {"b1", b}};
  r.per_category = {{"A", a}, {"B", b}};
  r.overall = (a + b) / 2;
  r.warnings = {"subcategory 'x' has no test records; excluded"};
  return r;
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(ReportJsonTest, RoundTrip) {
  const std::vector<EvalReport> reports = {Sample("image", 0.5, 0.25),
                                           Sample("fused", 1.0 / 3, 0.9)};
  const std::string text = ReportsToJson(reports, {20, "euclidean", "subcategory"});
  const auto back = ReportsFromJson(text);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].mode, reports[i].mode);
    EXPECT_EQ(back[i].k, 20u);
    EXPECT_EQ(back[i].n_test, 7u);
    EXPECT_EQ(back[i].per_subcategory, reports[i].per_subcategory);
    EXPECT_EQ(back[i].per_category, reports[i].per_category);
    EXPECT_EQ(back[i].overall, reports[i].overall);
    EXPECT_EQ(back[i].warnings, reports[i].warnings);
  }
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc["format_version"], 1);
  EXPECT_EQ(doc["k"], 20);
  EXPECT_EQ(doc["metric"], "euclidean");
  EXPECT_EQ(doc["label_level"], "subcategory");
}

TEST(ReportJsonTest, MalformedInputIsParseError) {
  try {
    ReportsFromJson("{\"reports\": [{\"mode\": 3}]}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
  }
}

TEST(ReportTableTest, LayoutAndAverageRow) {
  const std::vector<EvalReport> reports = {Sample("image", 0.5, 0.25),
                                           Sample("concat", 0.75, 0.5)};
  const auto lines = Lines(ReportsToTable(reports));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "Category   image  concat");
  EXPECT_EQ(lines[1], "A          50.00   75.00");
  EXPECT_EQ(lines[2], "B          25.00   50.00");
  EXPECT_EQ(lines[3], "Average    37.50   62.50");
}

TEST(ReportTableTest, MissingCategoryShownAsDash) {
  EvalReport a = Sample("image", 0.5, 0.25);
  EvalReport b = Sample("text", 0.1, 0.2);
  b.per_category.erase("B");
  const std::vector<EvalReport> reports = {a, b};
  const auto lines = Lines(ReportsToTable(reports));
  EXPECT_EQ(lines[2], "B          25.00       -");
}

TEST(ReferenceFixtureTest, ReferenceTablesFormatBack) {
  std::vector<EvalReport> cols;
  for (const auto& c : kPretrainedReference) cols.push_back(ReferenceReport(c));
  cols.push_back(ReferenceReport(kTrainedFusedReference));
  const auto lines = Lines(ReportsToTable(cols));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "Category            image    text  concat   fused");
  EXPECT_EQ(lines[1], "Holidays            70.12   75.30   77.70   85.12");
  EXPECT_EQ(lines[2], "Messages            48.79   63.57   66.00   73.05");
  EXPECT_EQ(lines[3], "Special Occasions   47.17   54.70   58.50   79.25");
  EXPECT_EQ(lines[4], "Average             55.36   64.50   67.40   79.14");
}

TEST(ReferenceFixtureTest, AveragesAreCategoryMeansUpToRounding) {
  std::vector<ReferenceColumn> cols(std::begin(kPretrainedReference),
                                    std::end(kPretrainedReference));
  cols.push_back(kTrainedFusedReference);
  for (const auto& c : cols) {
    const double mean = (c.holidays + c.special_occasions + c.messages) / 3;
    EXPECT_NEAR(c.average, mean, 0.05) << c.mode;
  }
}

}  // namespace
}  // namespace cardfuse
