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


#ifndef PREPSEARCH_RUN_H_
#define PREPSEARCH_RUN_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prepsearch/bilevel.h"
#include "prepsearch/data_ingest.h"
#include "prepsearch/synth.h"

namespace prepsearch {

inline constexpr int kSchemaVersion = 1;

enum class Method { kDiffPrepFix, kDiffPrepFlex, kDefault, kRandomSearch };

const char* MethodName(Method method);
Method ParseMethod(const std::string& name);

struct RunConfig {
  std::optional<std::string> data_path;
  std::optional<SynthSpec> synth;
  std::string target = "label";
  Method method = Method::kDiffPrepFix;
  SplitSpec split;
  uint64_t seed = 0;
  SearchConfig search;  // seed and mode are set from the fields above
  std::optional<size_t> trials;  // random-search only; default 20
  std::string ablation;  // "", "no-feature-wise", "train-only"
  std::string out_dir;

  void Validate() const;
  nlohmann::json ToJson() const;
  // Keys: data | synth, target, method, split [a, b, c], seed, model,
  // search {...}, operators {...}, trials, ablation, out.
  static RunConfig FromJson(const nlohmann::json& doc);
  // The search config with run-level seed, mode and ablation applied.
  SearchConfig EffectiveSearch() const;
  // Identifies data source, target and split; compare requires it to match.
  nlohmann::json DataKey() const;
};

struct RunOutput {
  nlohmann::json summary;
  std::vector<nlohmann::json> metrics;  // one record per epoch
  std::vector<nlohmann::json> timing;   // wall-clock per epoch
  std::optional<nlohmann::json> pipeline;  // diffprep methods
  std::optional<nlohmann::json> params;    // diffprep methods
};

RunOutput Run(const RunConfig& config);

// metrics.jsonl, timing.jsonl, summary.json, and for diffprep methods
// pipeline.json and params.json.
void WriteRunOutput(const RunOutput& output, const std::string& dir);

// One row per config with val/test accuracy, wall-clock and slowdown versus
// the default-method row.
nlohmann::json Compare(const std::vector<RunConfig>& configs);

}  // namespace prepsearch

#endif  // PREPSEARCH_RUN_H_
