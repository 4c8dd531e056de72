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


#ifndef PREPSEARCH_BASELINES_H_
#define PREPSEARCH_BASELINES_H_

#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "prepsearch/bilevel.h"
#include "prepsearch/data_ingest.h"
#include "prepsearch/operators.h"

namespace prepsearch {

// One operator per TF type, applied in order to every numeric column.
// Categorical groups always get most-frequent imputation and identity for the
// remaining stages.
struct DiscretePipeline {
  std::vector<OperatorSpec> stages;

  void Validate() const;  // types unique, imputation first
  std::string Name() const;
  nlohmann::json ToJson() const;
};

// Mean imputation then standardization.
DiscretePipeline DefaultPipeline();

struct TransformedSplits {
  Eigen::MatrixXd train;
  Eigen::MatrixXd val;
  Eigen::MatrixXd test;
};

// Operators are fitted stage by stage on the training split, then applied to
// all three splits.
TransformedSplits ApplyDiscrete(const DiscretePipeline& pipeline,
                                const FeatureMatrix& train,
                                const FeatureMatrix& val,
                                const FeatureMatrix& test);

// The model-only part of the search protocol: same epochs, batch order,
// learning rate and best-snapshot rule, on already transformed features.
// best_params stays empty.
SearchResult TrainFixed(const SearchConfig& config, const TransformedSplits& x,
                        const FeatureMatrix& train, const FeatureMatrix& val,
                        const FeatureMatrix& test,
                        const EpochCallback& on_epoch = {});

SearchResult RunDefault(const SearchConfig& config, const FeatureMatrix& train,
                        const FeatureMatrix& val, const FeatureMatrix& test,
                        const EpochCallback& on_epoch = {});

// Trial i draws its pipeline from seed + i; every trial trains with the run
// seed so identical pipelines give identical trials.
DiscretePipeline SampleTrialPipeline(const SearchConfig& config,
                                     size_t trial);

struct TrialRecord {
  size_t index = 0;
  DiscretePipeline pipeline;
  int best_epoch = 0;
  double val_accuracy = 0;
  double test_accuracy = 0;
};

struct RandomSearchResult {
  std::vector<TrialRecord> trials;
  size_t best_trial = 0;  // max val accuracy, earliest on ties
  SearchResult best;
  PassCounts passes;  // summed over trials
  double wall_ms = 0;
};

RandomSearchResult RandomSearch(const SearchConfig& config, size_t trials,
                                const FeatureMatrix& train,
                                const FeatureMatrix& val,
                                const FeatureMatrix& test);

}  // namespace prepsearch

#endif  // PREPSEARCH_BASELINES_H_
