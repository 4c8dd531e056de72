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


#ifndef PREPSEARCH_BILEVEL_H_
#define PREPSEARCH_BILEVEL_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "prepsearch/data_ingest.h"
#include "prepsearch/diff_pipeline.h"
#include "prepsearch/model.h"
#include "prepsearch/operators.h"
#include "prepsearch/pipeline_params.h"

namespace prepsearch {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index size, AdamOptions options);
  // x -= lr * mhat / (sqrt(vhat) + eps)
  void Step(Eigen::VectorXd& x, const Eigen::VectorXd& grad);
  int64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int64_t t_ = 0;
};

enum class Objective { kBilevel, kTrainOnly };

struct SearchConfig {
  PrototypeMode mode = PrototypeMode::kFix;
  Objective objective = Objective::kBilevel;
  bool feature_wise = true;
  bool categorical_full_search = false;
  std::vector<TfType> prototype = {TfType::kMissingImpute, TfType::kNormalize,
                                   TfType::kOutlierRepair, TfType::kDiscretize};
  CatalogConfig catalog;
  ModelKind model = ModelKind::kLogistic;
  Eigen::Index hidden = 100;
  double lr1 = 0.01;  // Adam, pipeline parameters
  double lr2 = 0.1;   // SGD, model weights
  int epochs = 1000;
  int batch_size = 512;
  double eps_scale = 0.01;  // eps_w = eps_scale / |grad_w' L_val|
  double init_noise = 1e-3;
  AdamOptions adam;
  SinkhornOptions sinkhorn;
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep `base` values. The result is validated.
  static SearchConfig FromJson(const nlohmann::json& doc,
                               const SearchConfig& base);
  static SearchConfig FromJson(const nlohmann::json& doc);
};

// Pass instrumentation. A forward pass is one loss evaluation of the model on
// pipeline outputs for a (batch, w) pair; a backward pass is the matching
// gradient computation. Evaluation passes are not counted.
struct PassCounts {
  int64_t iterations = 0;
  int64_t fit = 0;
  int64_t forward = 0;
  int64_t backward = 0;
  int64_t d3_skipped = 0;

  nlohmann::json ToJson() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  PassCounts passes;  // cumulative
  double wall_ms = 0;
};

// ---------------------------------------------------------------------------
// Hypergradient
// ---------------------------------------------------------------------------

// Gradient oracles of a bi-level problem with inner variable w and outer
// variable beta (flattened).
class BilevelProblem {
 public:
  struct ValGrads {
    double loss = 0;
    Eigen::VectorXd dw;
    Eigen::VectorXd dbeta;
  };

  virtual ~BilevelProblem() = default;
  // grad_w L_train(beta, w)
  virtual Eigen::VectorXd TrainGradW(const Eigen::VectorXd& w) = 0;
  // grad_{w, beta} L_val(beta, w)
  virtual ValGrads ValGrad(const Eigen::VectorXd& w) = 0;
  // grad_beta L_train(beta, w)
  virtual Eigen::VectorXd TrainGradBeta(const Eigen::VectorXd& w) = 0;
};

struct Hypergradient {
  Eigen::VectorXd train_grad_w;
  Eigen::VectorXd w_next;  // w' = w - lr2 * train_grad_w
  double val_loss = 0;
  Eigen::VectorXd d2;
  Eigen::VectorXd d3;  // zero when skipped
  bool d3_skipped = false;
  Eigen::VectorXd total;  // d2 - lr2 * d3
};

// w' = w - lr2 * grad
Eigen::VectorXd VirtualStep(const Eigen::VectorXd& w,
                            const Eigen::VectorXd& grad, double lr2);

Hypergradient ComputeHypergradient(BilevelProblem& problem,
                                   const Eigen::VectorXd& w, double lr2,
                                   double eps_scale = 0.01);

// The pipeline + model problem for one iteration: operators already fitted,
// pipeline forwards of both batches taped.
class PipelineProblem : public BilevelProblem {
 public:
  PipelineProblem(const PipelineLayout& layout, const RelaxedParams& relaxed,
                  const FittedPipeline& fitted, const ModelShape& shape,
                  const FeatureMatrix& train, const FeatureMatrix& val,
                  PassCounts* counts);

  Eigen::VectorXd TrainGradW(const Eigen::VectorXd& w) override;
  ValGrads ValGrad(const Eigen::VectorXd& w) override;
  Eigen::VectorXd TrainGradBeta(const Eigen::VectorXd& w) override;

  // Joint training-loss gradient: (loss, dw, dbeta).
  ValGrads TrainGradJoint(const Eigen::VectorXd& w);
  double TrainLoss(const Eigen::VectorXd& w) const;
  double ValLoss(const Eigen::VectorXd& w) const;

 private:
  ValGrads Joint(const PipelineForward& fwd, const std::vector<int>& labels,
                 const Eigen::VectorXd& w);

  const PipelineLayout& layout_;
  const RelaxedParams& relaxed_;
  const FittedPipeline& fitted_;
  ModelShape shape_;
  PipelineForward train_;
  PipelineForward val_;
  std::vector<int> train_labels_;
  std::vector<int> val_labels_;
  PassCounts* counts_;
};

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

// Operators fitted on the full training split, continuous mixture applied to
// `split`, then the model.
struct Evaluator {
  const PipelineLayout& layout;
  const ModelShape& shape;
  const FeatureMatrix& train;

  // Fit once, evaluate several splits.
  std::vector<EvalResult> Run(const PipelineParams& params,
                              const Eigen::VectorXd& w,
                              const std::vector<const FeatureMatrix*>& splits,
                              const SinkhornOptions& sinkhorn = {}) const;
};

struct SearchResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0;
  double best_val_accuracy = 0;
  double test_loss = 0;
  double test_accuracy = 0;
  PipelineParams best_params;
  Eigen::VectorXd best_w;
  PassCounts passes;
  double wall_ms = 0;
};

// Called after each epoch; the record is final.
using EpochCallback = std::function<void(const EpochRecord&)>;

class Search {
 public:
  Search(SearchConfig config, const FeatureMatrix& train,
         const FeatureMatrix& val, const FeatureMatrix& test);

  const PipelineLayout& layout() const { return layout_; }
  const ModelShape& shape() const { return shape_; }
  const PipelineParams& params() const { return params_; }
  const Eigen::VectorXd& weights() const { return w_; }
  const PassCounts& passes() const { return passes_; }

  // One parameter update on the given batches.
  void Iterate(const FeatureMatrix& train_batch, const FeatureMatrix& val_batch);
  SearchResult Run(const EpochCallback& on_epoch = {});

 private:
  SearchConfig config_;
  const FeatureMatrix& train_;
  const FeatureMatrix& val_;
  const FeatureMatrix& test_;
  PipelineLayout layout_;
  ModelShape shape_;
  PipelineParams params_;
  Eigen::VectorXd w_;
  Adam adam_;
  PassCounts passes_;
  int epoch_ = 0;
};

SearchResult RunSearch(const SearchConfig& config, const FeatureMatrix& train,
                       const FeatureMatrix& val, const FeatureMatrix& test,
                       const EpochCallback& on_epoch = {});

// Row batches of an epoch: a seeded permutation cut into consecutive chunks;
// the last chunk may be short.
std::vector<std::vector<size_t>> EpochBatches(size_t rows, size_t batch_size,
                                              Rng& rng);

}  // namespace prepsearch

#endif  // PREPSEARCH_BILEVEL_H_
