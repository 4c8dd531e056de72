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

#ifndef PREPSEARCH_DIFF_PIPELINE_H_
#define PREPSEARCH_DIFF_PIPELINE_H_

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prepsearch/data_ingest.h"
#include "prepsearch/operators.h"
#include "prepsearch/pipeline_params.h"

namespace prepsearch {

// One candidate operator at one stage: type/op index into beta.
struct StageTerm {
  size_t type;
  size_t op;
  FittedOperator fitted;
};

// Fitted operators for one column, stage by stage. In fix mode every term of
// stage i shares the prototype's type; in flex mode a stage holds every
// (type, op) pair that can occupy it.
struct ColumnPipeline {
  std::vector<std::vector<StageTerm>> stages;
};

struct FittedPipeline {
  std::vector<ColumnPipeline> columns;
};

// Recorded intermediates of one stage. All of these are snapshots: the
// backward pass reads them but never differentiates through them.
struct StageTape {
  std::vector<double> input;                 // x~_{i-1}
  std::vector<double> weights;               // beta~ (or alpha~ * beta~)
  std::vector<std::vector<double>> outputs;  // o~ per term
  std::vector<std::vector<double>> derivs;   // d~ per term
  std::vector<double> result;                // x_i
};

struct ColumnTape {
  std::vector<StageTape> stages;
};

struct PipelineTape {
  std::vector<ColumnTape> columns;
  Eigen::Index rows = 0;
};

// Weight of a term: beta(type, op) when alpha is null, otherwise
// alpha(stage, type) * beta(type, op).
double TermWeight(const StageTerm& term, size_t stage,
                  const Eigen::MatrixXd& beta, const Eigen::MatrixXd* alpha);

// Single-column forward in snapshot form:
//   x_i = sum_j w_j o~_j + x_{i-1} sum_j w~_j d~_j - x~_{i-1} sum_j w~_j d~_j
ColumnTape ForwardColumn(const ColumnPipeline& pipeline,
                         const Eigen::MatrixXd& beta,
                         const Eigen::MatrixXd* alpha,
                         std::span<const double> x0);

// Accumulates dL/dbeta (and dL/dalpha when alpha is given) and writes
// dL/dx0. Gradients sum over the rows.
void BackwardColumn(const ColumnPipeline& pipeline, const ColumnTape& tape,
                    const Eigen::MatrixXd& beta, const Eigen::MatrixXd* alpha,
                    std::span<const double> dxs, Eigen::MatrixXd& dbeta,
                    Eigen::MatrixXd* dalpha, std::span<double> dx0);

// Fits every candidate operator stage by stage on the batch: stage i is
// fitted on the stage i-1 mixture output. Missing cells are only visible to
// stage-1 imputers.
FittedPipeline FitStagewise(const PipelineLayout& layout,
                            const RelaxedParams& relaxed,
                            const FeatureMatrix& batch);

struct PipelineForward {
  Eigen::MatrixXd output;
  PipelineTape tape;
};

PipelineForward Forward(const PipelineLayout& layout,
                        const RelaxedParams& relaxed,
                        const FittedPipeline& fitted, const Eigen::MatrixXd& x0);

// Mixture outputs only; no tape or derivatives.
Eigen::MatrixXd Apply(const PipelineLayout& layout,
                      const RelaxedParams& relaxed,
                      const FittedPipeline& fitted, const Eigen::MatrixXd& x0);

struct PipelineBackward {
  WeightGrads grads;
  Eigen::MatrixXd dx0;
};

PipelineBackward Backward(const PipelineLayout& layout,
                          const RelaxedParams& relaxed,
                          const FittedPipeline& fitted,
                          const PipelineTape& tape, const Eigen::MatrixXd& dxs);

}  // namespace prepsearch

#endif  // PREPSEARCH_DIFF_PIPELINE_H_
