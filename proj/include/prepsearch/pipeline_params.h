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

#ifndef PREPSEARCH_PIPELINE_PARAMS_H_
#define PREPSEARCH_PIPELINE_PARAMS_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "prepsearch/data_ingest.h"
#include "prepsearch/operators.h"
#include "prepsearch/random.h"

namespace prepsearch {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Relaxations
// ---------------------------------------------------------------------------

// Row-wise softmax over the unmasked slots; masked slots are exactly 0.
Eigen::MatrixXd BetaFromTau(const Eigen::MatrixXd& tau, const MaskMatrix& mask);

// Vector-Jacobian product of BetaFromTau: dL/dtau given dL/dbeta.
Eigen::MatrixXd SoftmaxBackward(const Eigen::MatrixXd& beta,
                                const MaskMatrix& mask,
                                const Eigen::MatrixXd& dbeta);

struct SinkhornOptions {
  double tol = 1e-6;
  int max_iters = 100;
};

// Unrolled record of one Sinkhorn run. Each iteration applies column
// normalization then row normalization; `before_col[l]` and `before_row[l]`
// hold the inputs of those two steps.
struct SinkhornTrace {
  std::vector<Eigen::MatrixXd> before_col;
  std::vector<Eigen::MatrixXd> before_row;
  Eigen::MatrixXd result;
  int iterations = 0;
  bool converged = false;
};

SinkhornTrace Sinkhorn(const Eigen::MatrixXd& x,
                       const SinkhornOptions& options = {});
// Gradient with respect to the Sinkhorn input through the executed steps.
Eigen::MatrixXd SinkhornBackward(const SinkhornTrace& trace,
                                 const Eigen::MatrixXd& dresult);

// alpha = Sinkhorn(exp(psi - max psi)).
Eigen::MatrixXd AlphaFromPsi(const Eigen::MatrixXd& psi,
                             const SinkhornOptions& options = {});

// Alpha with one type pinned to stage 0 (row 0 and column `pinned` fixed to
// the unit vector); the remaining block is Sinkhorn-normalized. pinned < 0
// normalizes the full matrix.
struct AlphaTrace {
  int pinned = -1;
  double shift = 0;
  Eigen::MatrixXd theta;  // exp(psi block - shift)
  SinkhornTrace sinkhorn;
  Eigen::MatrixXd alpha;
};
AlphaTrace PinnedAlpha(const Eigen::MatrixXd& psi, int pinned,
                       const SinkhornOptions& options = {});
Eigen::MatrixXd PinnedAlphaBackward(const AlphaTrace& trace,
                                    const Eigen::MatrixXd& dalpha);

// Stage order from alpha: row by row, argmax over columns not yet taken
// (ties to the lowest index).
std::vector<size_t> DiscreteOrder(const Eigen::MatrixXd& alpha);
// Argmax of a row, ties to the lowest index.
size_t ArgmaxRow(const Eigen::MatrixXd& m, Eigen::Index row);

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

enum class PrototypeMode { kFix, kFlex };

struct LayoutOptions {
  PrototypeMode mode = PrototypeMode::kFix;
  // Fix mode stage order; empty means catalog order.
  std::vector<TfType> prototype;
  // false: all numeric columns share one parameter set, all categorical
  // columns another.
  bool feature_wise = true;
  // Search every TF type on one-hot columns instead of identity after
  // imputation.
  bool categorical_full_search = false;
};

// A set of encoded columns sharing one tau (and psi).
struct PipelineUnit {
  std::string name;
  bool categorical = false;
  std::vector<size_t> columns;
};

class PipelineLayout {
 public:
  static PipelineLayout Build(Catalog catalog, const FeatureMatrix& schema,
                              const LayoutOptions& options = {});

  const Catalog& catalog() const { return catalog_; }
  PrototypeMode mode() const { return options_.mode; }
  const LayoutOptions& options() const { return options_; }
  size_t num_types() const { return catalog_.types.size(); }
  size_t max_ops() const { return max_ops_; }
  size_t num_stages() const;
  // Catalog type index per stage (fix mode).
  const std::vector<size_t>& prototype() const { return prototype_; }
  // Type pinned to stage 0 in flex mode, or -1.
  int pinned_type() const { return pinned_; }

  const std::vector<PipelineUnit>& units() const { return units_; }
  size_t column_count() const { return column_unit_.size(); }
  size_t UnitOf(size_t column) const { return column_unit_[column]; }
  // Candidate operators of `type` for a unit (the mask's valid slots, in
  // order).
  const std::vector<OperatorSpec>& Ops(size_t unit, size_t type) const;
  const MaskMatrix& Mask(size_t unit) const;

 private:
  Catalog catalog_;
  LayoutOptions options_;
  size_t max_ops_ = 0;
  std::vector<size_t> prototype_;
  int pinned_ = -1;
  std::vector<PipelineUnit> units_;
  std::vector<size_t> column_unit_;
  std::vector<std::vector<OperatorSpec>> numeric_ops_;
  std::vector<std::vector<OperatorSpec>> categorical_ops_;
  MaskMatrix numeric_mask_;
  MaskMatrix categorical_mask_;
};

// Underlying parameters: tau (types x m) per unit, psi (types x types) per
// unit in flex mode.
struct PipelineParams {
  std::vector<Eigen::MatrixXd> tau;
  std::vector<Eigen::MatrixXd> psi;

  // tau = 0, psi = 0, plus uniform noise in [-noise, noise] on valid slots.
  static PipelineParams Init(const PipelineLayout& layout, double noise,
                             Rng& rng);
  static PipelineParams ZerosLike(const PipelineParams& other);

  Eigen::Index Size() const;
  Eigen::VectorXd Pack() const;
  void Unpack(const Eigen::VectorXd& flat);
  nlohmann::json ToJson() const;
  static PipelineParams FromJson(const nlohmann::json& doc);
};

// beta (and alpha) derived from PipelineParams, with the traces needed to
// chain gradients back.
struct RelaxedParams {
  std::vector<Eigen::MatrixXd> beta;
  std::vector<AlphaTrace> alpha;  // flex mode only

  const Eigen::MatrixXd& Alpha(size_t unit) const { return alpha[unit].alpha; }
};

RelaxedParams Relax(const PipelineLayout& layout, const PipelineParams& params,
                    const SinkhornOptions& options = {});

// Gradients with respect to beta / alpha, shaped like RelaxedParams.
struct WeightGrads {
  std::vector<Eigen::MatrixXd> dbeta;
  std::vector<Eigen::MatrixXd> dalpha;

  static WeightGrads Zeros(const PipelineLayout& layout);
  Eigen::VectorXd Pack() const;
  void Unpack(const Eigen::VectorXd& flat);
};

// D1: chains dL/dbeta (softmax Jacobian) and dL/dalpha (Sinkhorn + exp) to
// the underlying parameters.
PipelineParams ChainToParams(const PipelineLayout& layout,
                             const RelaxedParams& relaxed,
                             const WeightGrads& grads);

// Per unit: stage order and the argmax operator per stage, with weights.
nlohmann::json ExportDiscrete(const PipelineLayout& layout,
                              const RelaxedParams& relaxed,
                              const std::vector<std::string>& column_names);

}  // namespace prepsearch

#endif  // PREPSEARCH_PIPELINE_PARAMS_H_
