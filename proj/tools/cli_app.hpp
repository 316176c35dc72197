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

#ifndef CARDFUSE_TOOLS_CLI_APP_HPP_
#define CARDFUSE_TOOLS_CLI_APP_HPP_

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cardfuse/cardfuse.hpp"

namespace cardfuse::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  // dataset location
  std::string data_dir;
  std::string manifest;
  std::string blob;
  std::string run_dir = "run";
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // synth
  SynthConfig synth;
  std::string synth_out = "data";

  // split
  double train_fraction = 0.8;

  // train
  std::string objective = "triplet";
  double alpha = 0.2;
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::string optimizer = "adam";
  std::string mining = "semi_hard";
  std::string label_level = "subcategory";
  std::string gate = "product";
  bool l2_normalize = false;
  std::size_t hidden = 0;
  std::size_t hidden2 = 0;

  // eval
  std::string modes = "image,text,concat,fused";
  std::size_t k = 20;
  std::string metric = "euclidean";

  bool json = false;
};

namespace detail {

inline Error Usage(const std::string& msg) { return Error(ErrorKind::kParameter, msg); }

struct DatasetPaths {
  std::string manifest;
  std::string blob;
};

inline DatasetPaths ResolveDataset(const RunConfig& cfg) {
  if (!cfg.manifest.empty() || !cfg.blob.empty()) {
    if (cfg.manifest.empty() || cfg.blob.empty()) {
      throw Usage("--manifest and --blob must be given together");
    }
    return {cfg.manifest, cfg.blob};
  }
  if (cfg.data_dir.empty()) {
    throw Usage("a dataset is required: pass --data DIR or --manifest/--blob");
  }
  const std::filesystem::path dir(cfg.data_dir);
  return {(dir / "manifest.json").string(), (dir / "embeddings.f32").string()};
}

inline std::string Timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Wall-clock data only ever goes to meta.json.
inline void UpdateMeta(const std::filesystem::path& run_dir, const std::string& command,
                       nlohmann::ordered_json details) {
  const auto path = run_dir / "meta.json";
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  if (std::filesystem::exists(path)) {
    try {
      meta = nlohmann::ordered_json::parse(cardfuse::detail::ReadFile(path.string()));
    } catch (const nlohmann::json::exception&) {
      meta = nlohmann::ordered_json::object();
    }
  }
  details["finished_at"] = Timestamp();
  meta[command] = std::move(details);
  cardfuse::detail::WriteFile(path.string(), meta.dump(2) + "\n");
}

inline std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Dataset LoadWithSplit(const RunConfig& cfg, std::ostream& err) {
  const DatasetPaths paths = ResolveDataset(cfg);
  Dataset ds = LoadDataset(paths.manifest, paths.blob);
  const bool unassigned = std::any_of(ds.records.begin(), ds.records.end(), [](const auto& r) {
    return r.split == Split::kUnassigned;
  });
  if (unassigned) {
    err << "note: dataset has unassigned records; splitting with seed " << cfg.seed << "\n";
    const auto rep = StratifiedSplit(ds.records, {cfg.train_fraction, cfg.seed});
    for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
  }
  return ds;
}

}  // namespace detail

inline int CmdSynth(const RunConfig& cfg, std::ostream& out) {
  SynthConfig sc = cfg.synth;
  sc.train_fraction = cfg.train_fraction;
  const Dataset ds = SynthGenerate(sc);
  const std::filesystem::path dir(cfg.synth_out);
  std::filesystem::create_directories(dir);
  SaveDataset(ds, (dir / "manifest.json").string(), (dir / "embeddings.f32").string());
  out << "wrote " << ds.records.size() << " records (dim " << ds.dim_image << "+"
      << ds.dim_text << ") to " << dir.string() << "\n";
  return kExitOk;
}

inline int CmdSplit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto paths = detail::ResolveDataset(cfg);
  Dataset ds = LoadDataset(paths.manifest, paths.blob);
  const SplitReport rep = StratifiedSplit(ds.records, {cfg.train_fraction, cfg.seed});
  for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
  cardfuse::detail::WriteFile(paths.manifest, ManifestToJson(ds));
  std::size_t train = 0;
  for (const auto& c : rep.per_subcategory) train += c.train;
  out << "split " << ds.records.size() << " records: " << train << " train, "
      << ds.records.size() - train << " test\n";
  return kExitOk;
}

inline TrainConfig MakeTrainConfig(const RunConfig& cfg) {
  TrainConfig tc;
  tc.objective = ParseObjective(cfg.objective);
  tc.margin = cfg.alpha;
  tc.batch_size = cfg.batch_size;
  tc.steps = cfg.steps;
  tc.optimizer.learning_rate = cfg.lr;
  if (cfg.optimizer == "adam") {
    tc.optimizer.kind = OptimizerKind::kAdam;
  } else if (cfg.optimizer == "sgd") {
    tc.optimizer.kind = OptimizerKind::kSgd;
  } else {
    throw detail::Usage("--optimizer must be adam|sgd");
  }
  tc.seed = cfg.seed;
  tc.mining = ParseMiningStrategy(cfg.mining);
  tc.label_level = ParseLabelLevel(cfg.label_level);
  tc.gate = ParseGateVariant(cfg.gate);
  tc.l2_normalize_output = cfg.l2_normalize;
  tc.hidden = cfg.hidden;
  tc.hidden2 = cfg.hidden2;
  tc.Validate();
  return tc;
}

inline int CmdTrain(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const TrainConfig tc = MakeTrainConfig(cfg);
  detail::ResolveDataset(cfg);
  const Dataset ds = detail::LoadWithSplit(cfg, err);
  const TrainResult res = Train(ds, tc);

  const std::filesystem::path dir(cfg.run_dir);
  std::filesystem::create_directories(dir);
  Checkpoint ck;
  ck.params = res.params;
  ck.head = res.head;
  ck.class_names = res.class_names;
  ck.label_level = tc.label_level;
  ck.objective = tc.objective;
  ck.seed = tc.seed;
  ck.step = res.steps_taken;
  SaveCheckpoint(ck, (dir / "checkpoint.json").string(), (dir / "checkpoint.f32").string());
  cardfuse::detail::WriteFile((dir / "loss.csv").string(), LossCurveCsv(res.losses));

  nlohmann::ordered_json meta;
  meta["objective"] = cfg.objective;
  meta["steps"] = tc.steps;
  meta["seed"] = tc.seed;
  detail::UpdateMeta(dir, "train", meta);

  const double last = res.losses.empty() ? 0.0 : res.losses.back();
  out << "trained " << res.steps_taken << " steps (" << ObjectiveName(tc.objective)
      << "), final loss " << last << "; checkpoint in " << dir.string() << "\n";
  return kExitOk;
}

inline int CmdEval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto modes = detail::SplitList(cfg.modes);
  if (modes.empty()) throw detail::Usage("--modes must list at least one mode");
  bool needs_checkpoint = false;
  for (const auto& m : modes) {
    if (m == "head") {
      needs_checkpoint = true;
    } else if (ParseEmbedMode(m) == EmbedMode::kFused) {
      needs_checkpoint = true;
    }
  }
  EvalOptions opt;
  opt.k = cfg.k;
  opt.metric = ParseMetric(cfg.metric);
  opt.level = ParseLabelLevel(cfg.label_level);
  opt.threads = cfg.threads;
  detail::ResolveDataset(cfg);

  const std::filesystem::path dir(cfg.run_dir);
  std::optional<Checkpoint> ck;
  if (needs_checkpoint) {
    ck = LoadCheckpoint((dir / "checkpoint.json").string(), (dir / "checkpoint.f32").string());
  }
  const Dataset ds = detail::LoadWithSplit(cfg, err);
  CompareInputs in;
  in.dataset = &ds;
  if (ck) {
    in.params = &ck->params;
    in.head = ck->head ? &*ck->head : nullptr;
    in.head_level = ck->label_level;
  }
  const auto reports = CompareModes(in, modes, opt);
  for (const auto& r : reports) {
    for (const auto& w : r.warnings) err << "warning (" << r.mode << "): " << w << "\n";
  }

  std::filesystem::create_directories(dir);
  ReportMeta meta{opt.k, MetricName(opt.metric), LabelLevelName(opt.level)};
  const std::string table = ReportsToTable(reports);
  cardfuse::detail::WriteFile((dir / "report.json").string(), ReportsToJson(reports, meta));
  cardfuse::detail::WriteFile((dir / "report.txt").string(), table);
  nlohmann::ordered_json m;
  m["modes"] = modes;
  m["k"] = opt.k;
  detail::UpdateMeta(dir, "eval", m);
  out << table;
  return kExitOk;
}

inline int CmdInspect(const RunConfig& cfg, std::ostream& out) {
  const auto paths = detail::ResolveDataset(cfg);
  const Dataset ds = LoadDataset(paths.manifest, paths.blob);

  struct Counts {
    std::size_t total = 0, train = 0, test = 0;
  };
  std::map<std::string, Counts> per_cat;
  std::map<std::string, Counts> per_sub;
  auto bump = [](Counts& c, Split s) {
    ++c.total;
    if (s == Split::kTrain) ++c.train;
    if (s == Split::kTest) ++c.test;
  };
  struct NormStats {
    double min = INFINITY, max = 0.0, sum = 0.0;
  } img_norm, txt_norm;
  auto add_norm = [](NormStats& s, double v) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    s.sum += v;
  };
  Counts all;
  for (const auto& r : ds.records) {
    bump(per_cat[r.category], r.split);
    bump(per_sub[r.subcategory], r.split);
    bump(all, r.split);
    add_norm(img_norm, L2Norm<float>(r.image_vec));
    add_norm(txt_norm, L2Norm<float>(r.text_vec));
  }
  const double n = std::max<std::size_t>(ds.records.size(), 1);

  nlohmann::ordered_json j;
  j["records"] = ds.records.size();
  j["dim_image"] = ds.dim_image;
  j["dim_text"] = ds.dim_text;
  j["split"] = {{"train", all.train}, {"test", all.test},
                {"unassigned", all.total - all.train - all.test}};
  auto norm_json = [&](const NormStats& s) {
    return nlohmann::ordered_json{{"min", ds.records.empty() ? 0.0 : s.min},
                                  {"mean", s.sum / n},
                                  {"max", s.max}};
  };
  j["norms"] = {{"image", norm_json(img_norm)}, {"text", norm_json(txt_norm)}};
  auto counts_json = [](const Counts& c) {
    nlohmann::ordered_json o{{"total", c.total}, {"train", c.train}, {"test", c.test}};
    o["train_fraction"] = c.total ? static_cast<double>(c.train) / c.total : 0.0;
    return o;
  };
  for (const auto& [name, c] : per_cat) j["categories"][name] = counts_json(c);
  for (const auto& [name, c] : per_sub) j["subcategories"][name] = counts_json(c);

  if (cfg.json) {
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "records: " << ds.records.size() << "  dim_image: " << ds.dim_image
      << "  dim_text: " << ds.dim_text << "\n";
  out << "split: " << all.train << " train, " << all.test << " test, "
      << all.total - all.train - all.test << " unassigned\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "image norm min/mean/max: %.4f %.4f %.4f\n",
                ds.records.empty() ? 0.0 : img_norm.min, img_norm.sum / n, img_norm.max);
  out << buf;
  std::snprintf(buf, sizeof(buf), "text  norm min/mean/max: %.4f %.4f %.4f\n",
                ds.records.empty() ? 0.0 : txt_norm.min, txt_norm.sum / n, txt_norm.max);
  out << buf;
  out << "categories:\n";
  for (const auto& [name, c] : per_cat) {
    out << "  " << name << ": " << c.total << " (" << c.train << " train, " << c.test << " test)\n";
  }
  out << "subcategories:\n";
  for (const auto& [name, c] : per_sub) {
    std::snprintf(buf, sizeof(buf), "  %s: %zu (%zu train, %zu test, train fraction %.3f)\n",
                  name.c_str(), c.total, c.train, c.test,
                  c.total ? static_cast<double>(c.train) / c.total : 0.0);
    out << buf;
  }
  return kExitOk;
}

// Entry point shared by the executable and the tests.
inline int Run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"cardfuse: image/text embedding fusion, training and kNN evaluation"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_dir, "Dataset directory (manifest.json + embeddings.f32)");
    sub->add_option("--manifest", cfg.manifest, "Dataset manifest path");
    sub->add_option("--blob", cfg.blob, "Dataset .f32 blob path");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Seed for all randomness in this invocation");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired-embedding dataset");
  synth->add_option("--categories", cfg.synth.n_categories)->check(CLI::PositiveNumber);
  synth->add_option("--subcats", cfg.synth.n_subcats_per_cat, "Subcategories per category")
      ->check(CLI::PositiveNumber);
  synth->add_option("--per-subcat", cfg.synth.n_per_subcat, "Records per subcategory")
      ->check(CLI::PositiveNumber);
  synth->add_option("--dim", cfg.synth.dim, "Image and text dimension")->check(CLI::PositiveNumber);
  synth->add_option("--sigma", cfg.synth.noise_sigma, "Noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--text-specificity", cfg.synth.text_specificity)->check(CLI::NonNegativeNumber);
  synth->add_option("--style-rank", cfg.synth.style_rank);
  synth->add_option("--style-scale", cfg.synth.style_scale)->check(CLI::NonNegativeNumber);
  synth->add_option("--train-fraction", cfg.train_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--out", cfg.synth_out, "Output directory")->capture_default_str();
  synth->add_option("--seed", cfg.synth.seed, "Generator and split seed")->capture_default_str();

  auto* split = app.add_subcommand("split", "Assign a stratified train/test split in place");
  add_dataset(split);
  split->add_option("--train-fraction", cfg.train_fraction)->check(CLI::Range(0.0, 1.0));
  add_seed(split);

  auto* train = app.add_subcommand("train", "Train the fusion network");
  add_dataset(train);
  train->add_option("--objective", cfg.objective, "triplet | cross_entropy")
      ->check(CLI::IsMember({"triplet", "cross_entropy"}));
  train->add_option("--alpha", cfg.alpha, "Triplet margin")->check(CLI::PositiveNumber);
  train->add_option("--steps,--k-steps", cfg.steps, "Optimizer steps");
  train->add_option("--batch-size", cfg.batch_size)->check(CLI::Range(2, 1 << 20));
  train->add_option("--lr", cfg.lr, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--optimizer", cfg.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  train->add_option("--mining", cfg.mining)->check(CLI::IsMember({"semi_hard", "hard", "random"}));
  train->add_option("--label-level", cfg.label_level)
      ->check(CLI::IsMember({"subcategory", "category"}));
  train->add_option("--gate", cfg.gate)->check(CLI::IsMember({"product", "tirg"}));
  train->add_flag("--l2-normalize", cfg.l2_normalize, "L2-normalize the fused output");
  train->add_option("--hidden", cfg.hidden);
  train->add_option("--hidden2", cfg.hidden2);
  train->add_option("--train-fraction", cfg.train_fraction)->check(CLI::Range(0.0, 1.0));
  train->add_option("--run-dir", cfg.run_dir)->capture_default_str();
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "kNN evaluation of embedding modes");
  add_dataset(eval);
  eval->add_option("--modes", cfg.modes, "Comma list of image,text,concat,fused,head")
      ->capture_default_str();
  eval->add_option("--k", cfg.k, "Neighbors")->check(CLI::PositiveNumber);
  eval->add_option("--metric", cfg.metric)->check(CLI::IsMember({"euclidean", "cosine"}));
  eval->add_option("--label-level", cfg.label_level)
      ->check(CLI::IsMember({"subcategory", "category"}));
  eval->add_option("--threads", cfg.threads)->check(CLI::PositiveNumber);
  eval->add_option("--train-fraction", cfg.train_fraction)->check(CLI::Range(0.0, 1.0));
  eval->add_option("--run-dir", cfg.run_dir)->capture_default_str();
  add_seed(eval);

  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset");
  add_dataset(inspect);
  inspect->add_flag("--json", cfg.json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    if (synth->parsed()) return CmdSynth(cfg, out);
    if (split->parsed()) return CmdSplit(cfg, out, err);
    if (train->parsed()) return CmdTrain(cfg, out, err);
    if (eval->parsed()) return CmdEval(cfg, out, err);
    if (inspect->parsed()) return CmdInspect(cfg, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.kind() == ErrorKind::kParameter ? kExitUsage : kExitRuntime;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cardfuse::cli

#endif  // CARDFUSE_TOOLS_CLI_APP_HPP_
