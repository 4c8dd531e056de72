/*
 * Copyright 2026 The Prepsearch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "prepsearch/run.h"

#include <filesystem>
#include <fstream>

#include "prepsearch/baselines.h"
#include "prepsearch/error.h"

namespace prepsearch {
namespace {

using nlohmann::json;

json Stamp(json record, const char* kind) {
  json out = {{"schema_version", kSchemaVersion}, {"record", kind}};
  out.update(record);
  return out;
}

RawTable LoadData(const RunConfig& config) {
  if (config.data_path) return LoadCsv(*config.data_path, config.target);
  return Generate(*config.synth).corrupted;
}

json EpochJson(const EpochRecord& r, Method method) {
  return Stamp({{"method", MethodName(method)},
                {"epoch", r.epoch},
                {"train_loss", r.train_loss},
                {"val_loss", r.val_loss},
                {"val_accuracy", r.val_accuracy},
                {"passes", r.passes.ToJson()}},
               "epoch");
}

void Fill(RunOutput& out, const SearchResult& r, Method method) {
  for (const EpochRecord& e : r.epochs) {
    out.metrics.push_back(EpochJson(e, method));
    out.timing.push_back(
        Stamp({{"epoch", e.epoch}, {"wall_ms", e.wall_ms}}, "timing"));
  }
  out.summary["best_epoch"] = r.best_epoch;
  out.summary["val_loss"] = r.best_val_loss;
  out.summary["val_accuracy"] = r.best_val_accuracy;
  out.summary["test_loss"] = r.test_loss;
  out.summary["test_accuracy"] = r.test_accuracy;
  out.summary["passes"] = r.passes.ToJson();
  out.summary["wall_ms"] = r.wall_ms;
}

template <typename T>
T Get(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidArgument,
         std::string("bad value for '") + key + "': " + e.what());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  Check(static_cast<bool>(f), ErrorCode::kNotFound,
        "cannot write " + path.string());
  f << text;
  Check(static_cast<bool>(f), ErrorCode::kInternal,
        "write failed: " + path.string());
}

std::string Lines(const std::vector<json>& records) {
  std::string s;
  for (const json& r : records) s += r.dump() + "\n";
  return s;
}

}  // namespace

const char* MethodName(Method method) {
  switch (method) {
    case Method::kDiffPrepFix:
      return "diffprep-fix";
    case Method::kDiffPrepFlex:
      return "diffprep-flex";
    case Method::kDefault:
      return "default";
    case Method::kRandomSearch:
      return "random-search";
  }
  return "?";
}

Method ParseMethod(const std::string& name) {
  for (Method m : {Method::kDiffPrepFix, Method::kDiffPrepFlex,
                   Method::kDefault, Method::kRandomSearch}) {
    if (name == MethodName(m)) return m;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown method '" + name + "'");
}

void RunConfig::Validate() const {
  Check(data_path.has_value() != synth.has_value(),
        ErrorCode::kInvalidArgument,
        "exactly one data source (data path or synth spec) is required");
  if (synth) synth->Validate();
  Check(!target.empty(), ErrorCode::kInvalidArgument, "target is required");
  split.Validate();
  const bool diffprep =
      method == Method::kDiffPrepFix || method == Method::kDiffPrepFlex;
  Check(!trials || method == Method::kRandomSearch,
        ErrorCode::kInvalidArgument, "trials only applies to random-search");
  Check(!trials || *trials >= 1, ErrorCode::kInvalidArgument,
        "trials must be >= 1");
  Check(ablation.empty() || ablation == "no-feature-wise" ||
            ablation == "train-only",
        ErrorCode::kInvalidArgument, "unknown ablation '" + ablation + "'");
  Check(ablation.empty() || diffprep, ErrorCode::kInvalidArgument,
        "ablations only apply to diffprep methods");
  EffectiveSearch().Validate();
}

SearchConfig RunConfig::EffectiveSearch() const {
  SearchConfig s = search;
  s.seed = seed;
  s.mode = method == Method::kDiffPrepFlex ? PrototypeMode::kFlex
                                           : PrototypeMode::kFix;
  if (ablation == "no-feature-wise") s.feature_wise = false;
  if (ablation == "train-only") s.objective = Objective::kTrainOnly;
  return s;
}

json RunConfig::ToJson() const {
  json doc = {{"target", target},
              {"method", MethodName(method)},
              {"split", {split.train_frac, split.val_frac, split.test_frac}},
              {"seed", seed},
              {"search", search.ToJson()}};
  if (data_path) doc["data"] = *data_path;
  if (synth) doc["synth"] = synth->ToJson();
  if (trials) doc["trials"] = *trials;
  if (!ablation.empty()) doc["ablation"] = ablation;
  if (!out_dir.empty()) doc["out"] = out_dir;
  return doc;
}

RunConfig RunConfig::FromJson(const json& doc) {
  Check(doc.is_object(), ErrorCode::kInvalidArgument,
        "run config must be an object");
  static const char* kKeys[] = {"data",  "synth",    "target",    "method",
                                "split", "seed",     "model",     "search",
                                "operators", "trials", "ablation", "out",
                                "epochs", "batch_size", "lr1", "lr2"};
  for (const auto& [key, value] : doc.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    Check(known, ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  }
  RunConfig c;
  if (doc.contains("seed")) c.seed = Get<uint64_t>(doc, "seed");
  if (doc.contains("data")) c.data_path = Get<std::string>(doc, "data");
  if (doc.contains("synth")) {
    json spec = doc["synth"];
    if (spec.is_object() && !spec.contains("seed")) spec["seed"] = c.seed;
    c.synth = SynthSpec::FromJson(spec);
  }
  if (doc.contains("target")) c.target = Get<std::string>(doc, "target");
  if (doc.contains("method")) c.method = ParseMethod(Get<std::string>(doc, "method"));
  if (doc.contains("split")) {
    const auto parts = Get<std::vector<double>>(doc, "split");
    Check(parts.size() == 3, ErrorCode::kInvalidArgument,
          "split needs three fractions");
    c.split.train_frac = parts[0];
    c.split.val_frac = parts[1];
    c.split.test_frac = parts[2];
  }
  c.split.seed = c.seed;
  if (doc.contains("search")) c.search = SearchConfig::FromJson(doc["search"]);
  // Shorthands for the common search overrides.
  json flat = json::object();
  for (const char* k : {"model", "epochs", "batch_size", "lr1", "lr2"}) {
    if (doc.contains(k)) flat[k] = doc[k];
  }
  if (doc.contains("operators")) flat["catalog"] = doc["operators"];
  c.search = SearchConfig::FromJson(flat, c.search);
  if (doc.contains("trials")) c.trials = Get<size_t>(doc, "trials");
  if (doc.contains("ablation")) c.ablation = Get<std::string>(doc, "ablation");
  if (doc.contains("out")) c.out_dir = Get<std::string>(doc, "out");
  c.Validate();
  return c;
}

json RunConfig::DataKey() const {
  json key = {{"target", target},
              {"split", {split.train_frac, split.val_frac, split.test_frac}},
              {"seed", seed}};
  if (data_path) key["data"] = *data_path;
  if (synth) key["synth"] = synth->ToJson();
  return key;
}

RunOutput Run(const RunConfig& config) {
  config.Validate();
  const SearchConfig search = config.EffectiveSearch();
  const RawTable table = LoadData(config);
  SplitSpec split = config.split;
  split.seed = config.seed;
  const SplitTables parts = Split(table, split);
  const EncodedSplits enc = Encode(parts.train, parts.val, parts.test);

  RunOutput out;
  out.summary = Stamp({{"method", MethodName(config.method)},
                       {"seed", config.seed},
                       {"model", ModelKindName(search.model)},
                       {"rows", {{"train", enc.train.rows()},
                                 {"val", enc.val.rows()},
                                 {"test", enc.test.rows()}}},
                       {"features", enc.train.cols()},
                       {"config", config.ToJson()}},
                      "summary");
  switch (config.method) {
    case Method::kDiffPrepFix:
    case Method::kDiffPrepFlex: {
      Search s(search, enc.train, enc.val, enc.test);
      const SearchResult r = s.Run();
      Fill(out, r, config.method);
      if (!config.ablation.empty()) out.summary["ablation"] = config.ablation;
      const RelaxedParams relaxed =
          Relax(s.layout(), r.best_params, search.sinkhorn);
      json pipeline = ExportDiscrete(s.layout(), relaxed, enc.train.ColumnNames());
      pipeline["schema_version"] = kSchemaVersion;
      out.pipeline = pipeline;
      json params = r.best_params.ToJson();
      params["schema_version"] = kSchemaVersion;
      json units = json::array();
      for (const PipelineUnit& u : s.layout().units()) units.push_back(u.name);
      params["units"] = units;
      params["epoch"] = r.best_epoch;
      out.params = params;
      out.summary["pipeline_param_records"] = s.layout().units().size();
      break;
    }
    case Method::kDefault: {
      const SearchResult r = RunDefault(search, enc.train, enc.val, enc.test);
      Fill(out, r, config.method);
      out.summary["pipeline"] = DefaultPipeline().ToJson();
      out.summary["pipeline_param_records"] = 0;
      break;
    }
    case Method::kRandomSearch: {
      const RandomSearchResult rs = RandomSearch(
          search, config.trials.value_or(20), enc.train, enc.val, enc.test);
      Fill(out, rs.best, config.method);
      json trials = json::array();
      for (const TrialRecord& t : rs.trials) {
        trials.push_back({{"trial", t.index},
                          {"pipeline", t.pipeline.ToJson()},
                          {"best_epoch", t.best_epoch},
                          {"val_accuracy", t.val_accuracy},
                          {"test_accuracy", t.test_accuracy}});
      }
      out.summary["trials"] = trials;
      out.summary["best_trial"] = rs.best_trial;
      out.summary["passes"] = rs.passes.ToJson();
      out.summary["wall_ms"] = rs.wall_ms;
      out.summary["pipeline_param_records"] = 0;
      break;
    }
  }
  return out;
}

void WriteRunOutput(const RunOutput& output, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  Check(!ec, ErrorCode::kNotFound, "cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);
  WriteText(root / "metrics.jsonl", Lines(output.metrics));
  WriteText(root / "timing.jsonl", Lines(output.timing));
  WriteText(root / "summary.json", output.summary.dump(2) + "\n");
  if (output.pipeline) {
    WriteText(root / "pipeline.json", output.pipeline->dump(2) + "\n");
  }
  if (output.params) {
    WriteText(root / "params.json", output.params->dump() + "\n");
  }
}

json Compare(const std::vector<RunConfig>& configs) {
  Check(configs.size() >= 2, ErrorCode::kInvalidArgument,
        "compare needs at least two configs");
  const json key = configs.front().DataKey();
  for (const RunConfig& c : configs) {
    c.Validate();
    Check(c.DataKey() == key, ErrorCode::kInvalidArgument,
          "compared configs use different data sources or splits");
  }
  std::vector<RunOutput> runs;
  for (const RunConfig& c : configs) runs.push_back(Run(c));
  std::optional<double> base;
  for (size_t i = 0; i < configs.size(); ++i) {
    if (configs[i].method == Method::kDefault) {
      base = runs[i].summary["wall_ms"].get<double>();
      break;
    }
  }
  json rows = json::array();
  for (size_t i = 0; i < configs.size(); ++i) {
    const json& s = runs[i].summary;
    json row = {{"method", s["method"]},
                {"val_accuracy", s["val_accuracy"]},
                {"test_accuracy", s["test_accuracy"]},
                {"wall_ms", s["wall_ms"]},
                {"slowdown", nullptr}};
    if (!configs[i].ablation.empty()) row["ablation"] = configs[i].ablation;
    if (base && *base > 0) row["slowdown"] = s["wall_ms"].get<double>() / *base;
    rows.push_back(row);
  }
  return Stamp({{"data", key}, {"rows", rows}}, "compare");
}

}  // namespace prepsearch
