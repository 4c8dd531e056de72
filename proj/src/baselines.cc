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

#include "prepsearch/baselines.h"

#include <chrono>
#include <cmath>

#include "prepsearch/diff_pipeline.h"
#include "prepsearch/error.h"
#include "prepsearch/pipeline_params.h"

namespace prepsearch {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double Ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - since)
      .count();
}

MatrixXd Rows(const MatrixXd& x, const std::vector<size_t>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::vector<int> Labels(const std::vector<int>& y,
                        const std::vector<size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const size_t r : rows) out.push_back(y[r]);
  return out;
}

}  // namespace

void DiscretePipeline::Validate() const {
  Check(!stages.empty(), ErrorCode::kInvalidArgument, "empty pipeline");
  Check(stages.front().IsImputer(), ErrorCode::kInvalidArgument,
        "a pipeline must start with imputation");
  for (size_t i = 0; i < stages.size(); ++i) {
    stages[i].Validate();
    for (size_t j = 0; j < i; ++j) {
      Check(stages[i].type != stages[j].type, ErrorCode::kInvalidArgument,
            "pipeline repeats a TF type");
    }
  }
}

std::string DiscretePipeline::Name() const {
  std::string s;
  for (const OperatorSpec& op : stages) {
    if (!s.empty()) s += " -> ";
    s += op.Name();
  }
  return s;
}

nlohmann::json DiscretePipeline::ToJson() const {
  nlohmann::json out = nlohmann::json::array();
  for (const OperatorSpec& op : stages) {
    out.push_back({{"tf_type", TfTypeName(op.type)}, {"operator", op.Name()}});
  }
  return out;
}

DiscretePipeline DefaultPipeline() {
  return {{OperatorSpec::Parse("mean"), OperatorSpec::Parse("standardize")}};
}

TransformedSplits ApplyDiscrete(const DiscretePipeline& pipeline,
                                const FeatureMatrix& train,
                                const FeatureMatrix& val,
                                const FeatureMatrix& test) {
  pipeline.Validate();
  // A one-operator catalog per stage; categorical units keep most-frequent
  // (slot 0) and identity.
  Catalog catalog;
  LayoutOptions options;
  for (const OperatorSpec& op : pipeline.stages) {
    TypeCatalog tc{op.type, {op}, {}};
    if (op.IsImputer()) {
      tc.categorical_ops = {{op.type, OperatorKind::kMostFrequentImpute, 0},
                            {op.type, OperatorKind::kDummyImpute, 0}};
    }
    catalog.types.push_back(tc);
    options.prototype.push_back(op.type);
  }
  const PipelineLayout layout =
      PipelineLayout::Build(std::move(catalog), train, options);
  RelaxedParams relaxed;
  for (size_t u = 0; u < layout.units().size(); ++u) {
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(layout.num_types()),
        static_cast<Eigen::Index>(layout.max_ops()));
    beta.col(0).setOnes();
    relaxed.beta.push_back(beta);
  }
  const FittedPipeline fitted = FitStagewise(layout, relaxed, train);
  return {Apply(layout, relaxed, fitted, train.data),
          Apply(layout, relaxed, fitted, val.data),
          Apply(layout, relaxed, fitted, test.data)};
}

SearchResult TrainFixed(const SearchConfig& config, const TransformedSplits& x,
                        const FeatureMatrix& train, const FeatureMatrix& val,
                        const FeatureMatrix& test,
                        const EpochCallback& on_epoch) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  ModelShape shape{config.model, train.cols(), train.num_classes,
                   config.hidden};
  shape.Validate();
  Rng init_rng = MakeRng(config.seed, "init/model");
  VectorXd w = InitWeights(shape, init_rng);
  Rng batch_rng = MakeRng(config.seed, "batch");

  SearchResult result;
  PassCounts passes;
  passes.fit = 1;
  bool have_best = false;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const auto batches =
        EpochBatches(static_cast<size_t>(train.rows()),
                     static_cast<size_t>(config.batch_size), batch_rng);
    for (const auto& rows : batches) {
      const ModelGrads g = Backward(shape, w, Rows(x.train, rows),
                                    Labels(train.labels, rows), false);
      Check(std::isfinite(g.loss), ErrorCode::kDivergence,
            "non-finite training loss at epoch " + std::to_string(epoch));
      w = VirtualStep(w, g.dw, config.lr2);
      ++passes.iterations;
      ++passes.forward;
      ++passes.backward;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = ForwardLoss(shape, w, x.train, train.labels).loss;
    rec.val_loss = ForwardLoss(shape, w, x.val, val.labels).loss;
    rec.val_accuracy = Accuracy(shape, w, x.val, val.labels);
    Check(std::isfinite(rec.train_loss) && std::isfinite(rec.val_loss),
          ErrorCode::kDivergence,
          "non-finite loss at epoch " + std::to_string(epoch));
    rec.passes = passes;
    rec.wall_ms = Ms(epoch_start);
    result.epochs.push_back(rec);
    if (!have_best || rec.val_loss < result.best_val_loss) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
      result.best_val_accuracy = rec.val_accuracy;
      result.best_w = w;
    }
    if (on_epoch) on_epoch(rec);
  }
  result.test_loss = ForwardLoss(shape, result.best_w, x.test, test.labels).loss;
  result.test_accuracy = Accuracy(shape, result.best_w, x.test, test.labels);
  result.passes = passes;
  result.wall_ms = Ms(start);
  return result;
}

SearchResult RunDefault(const SearchConfig& config, const FeatureMatrix& train,
                        const FeatureMatrix& val, const FeatureMatrix& test,
                        const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const TransformedSplits x = ApplyDiscrete(DefaultPipeline(), train, val, test);
  SearchResult r = TrainFixed(config, x, train, val, test, on_epoch);
  r.wall_ms = Ms(start);
  return r;
}

DiscretePipeline SampleTrialPipeline(const SearchConfig& config, size_t trial) {
  const Catalog catalog = BuildCatalog(config.catalog);
  Rng rng = MakeRng(config.seed + trial, "trial");
  DiscretePipeline p;
  for (TfType type : config.prototype) {
    const int t = catalog.IndexOf(type);
    Check(t >= 0, ErrorCode::kInvalidArgument,
          std::string("prototype type not in catalog: ") + TfTypeName(type));
    const auto& ops = catalog.types[static_cast<size_t>(t)].ops;
    std::uniform_int_distribution<size_t> pick(0, ops.size() - 1);
    p.stages.push_back(ops[pick(rng)]);
  }
  return p;
}

RandomSearchResult RandomSearch(const SearchConfig& config, size_t trials,
                                const FeatureMatrix& train,
                                const FeatureMatrix& val,
                                const FeatureMatrix& test) {
  Check(trials >= 1, ErrorCode::kInvalidArgument,
        "random search needs at least one trial");
  const auto start = std::chrono::steady_clock::now();
  RandomSearchResult out;
  for (size_t i = 0; i < trials; ++i) {
    TrialRecord rec;
    rec.index = i;
    rec.pipeline = SampleTrialPipeline(config, i);
    const TransformedSplits x = ApplyDiscrete(rec.pipeline, train, val, test);
    SearchResult r = TrainFixed(config, x, train, val, test);
    rec.best_epoch = r.best_epoch;
    rec.val_accuracy = r.best_val_accuracy;
    rec.test_accuracy = r.test_accuracy;
    out.passes.iterations += r.passes.iterations;
    out.passes.fit += r.passes.fit;
    out.passes.forward += r.passes.forward;
    out.passes.backward += r.passes.backward;
    if (i == 0 || rec.val_accuracy > out.trials[out.best_trial].val_accuracy) {
      out.best_trial = i;
      out.best = std::move(r);
    }
    out.trials.push_back(std::move(rec));
  }
  out.wall_ms = Ms(start);
  return out;
}

}  // namespace prepsearch
