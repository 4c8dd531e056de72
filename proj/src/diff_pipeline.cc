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

#include "prepsearch/diff_pipeline.h"

#include <cmath>

#include "prepsearch/error.h"

namespace prepsearch {
namespace {

// Catalog type indices that may occupy `stage`.
std::vector<size_t> StageTypes(const PipelineLayout& layout, size_t stage) {
  if (layout.mode() == PrototypeMode::kFix) return {layout.prototype()[stage]};
  const int pinned = layout.pinned_type();
  if (pinned >= 0 && stage == 0) return {static_cast<size_t>(pinned)};
  std::vector<size_t> types;
  for (size_t t = 0; t < layout.num_types(); ++t) {
    if (static_cast<int>(t) != pinned) types.push_back(t);
  }
  return types;
}

const Eigen::MatrixXd* AlphaOf(const PipelineLayout& layout,
                               const RelaxedParams& relaxed, size_t unit) {
  return layout.mode() == PrototypeMode::kFlex ? &relaxed.Alpha(unit) : nullptr;
}

bool IsCategoricalImputer(const OperatorSpec& spec) {
  return spec.kind == OperatorKind::kMostFrequentImpute ||
         spec.kind == OperatorKind::kDummyImpute;
}

// Per categorical group: the modal category slot among observed rows (ties
// to the lowest slot; the MISSING slot when nothing is observed).
std::vector<size_t> ModalSlots(const FeatureMatrix& batch) {
  std::vector<size_t> slots;
  for (const CategoricalGroup& g : batch.groups) {
    const size_t missing_slot = g.columns.size() - 1;
    size_t best = missing_slot;
    double best_count = 0;
    for (size_t k = 0; k < missing_slot; ++k) {
      const auto col = static_cast<Eigen::Index>(g.columns[k]);
      double count = 0;
      for (Eigen::Index r = 0; r < batch.rows(); ++r) {
        if (!batch.missing(r, col)) count += batch.data(r, col);
      }
      if (count > best_count) {
        best_count = count;
        best = k;
      }
    }
    slots.push_back(best);
  }
  return slots;
}

void CheckNoMissing(std::span<const double> x, size_t stage) {
  for (const double v : x) {
    if (std::isnan(v)) {
      Fail(ErrorCode::kDataError,
           "missing value survives past stage " + std::to_string(stage) +
               "; imputation must be the first stage");
    }
  }
}

bool StageIsImputeOnly(const std::vector<StageTerm>& terms) {
  for (const StageTerm& t : terms) {
    if (!t.fitted.spec().IsImputer()) return false;
  }
  return true;
}

// Mixture output without snapshots.
void MixStage(const std::vector<StageTerm>& terms, size_t stage,
              const Eigen::MatrixXd& beta, const Eigen::MatrixXd* alpha,
              std::span<const double> x, std::vector<double>& out) {
  out.assign(x.size(), 0.0);
  std::vector<double> o(x.size());
  for (const StageTerm& term : terms) {
    const double w = TermWeight(term, stage, beta, alpha);
    term.fitted.TransformBatch(x, o);
    for (size_t r = 0; r < x.size(); ++r) out[r] += w * o[r];
  }
}

}  // namespace

double TermWeight(const StageTerm& term, size_t stage,
                  const Eigen::MatrixXd& beta, const Eigen::MatrixXd* alpha) {
  const double b = beta(static_cast<Eigen::Index>(term.type),
                        static_cast<Eigen::Index>(term.op));
  if (alpha == nullptr) return b;
  return (*alpha)(static_cast<Eigen::Index>(stage),
                  static_cast<Eigen::Index>(term.type)) *
         b;
}

ColumnTape ForwardColumn(const ColumnPipeline& pipeline,
                         const Eigen::MatrixXd& beta,
                         const Eigen::MatrixXd* alpha,
                         std::span<const double> x0) {
  const size_t n = x0.size();
  ColumnTape tape;
  tape.stages.resize(pipeline.stages.size());
  std::vector<double> x(x0.begin(), x0.end());
  for (size_t i = 0; i < pipeline.stages.size(); ++i) {
    const auto& terms = pipeline.stages[i];
    StageTape& st = tape.stages[i];
    if (!StageIsImputeOnly(terms)) CheckNoMissing(x, i);
    st.input = x;
    st.weights.resize(terms.size());
    st.outputs.assign(terms.size(), std::vector<double>(n));
    st.derivs.assign(terms.size(), std::vector<double>(n));
    std::vector<double> mix(n, 0.0);
    std::vector<double> slope(n, 0.0);  // sum_j w~_j d~_j
    for (size_t j = 0; j < terms.size(); ++j) {
      const FittedOperator& f = terms[j].fitted;
      const double w = TermWeight(terms[j], i, beta, alpha);
      st.weights[j] = w;
      const auto& o = st.outputs[j];
      const auto& d = st.derivs[j];
      f.TransformBatch(x, st.outputs[j]);
      f.DerivativeBatch(x, st.derivs[j]);
      for (size_t r = 0; r < n; ++r) {
        mix[r] += w * o[r];
        slope[r] += w * d[r];
      }
    }
    st.result.resize(n);
    for (size_t r = 0; r < n; ++r) {
      // x and its snapshot carry the same value, so the correction is zero in
      // value and only routes the input gradient. Missing inputs have none.
      const double correction =
          std::isnan(x[r]) ? 0.0 : x[r] * slope[r] - st.input[r] * slope[r];
      st.result[r] = mix[r] + correction;
    }
    x = st.result;
  }
  CheckNoMissing(x, pipeline.stages.size());
  return tape;
}

void BackwardColumn(const ColumnPipeline& pipeline, const ColumnTape& tape,
                    const Eigen::MatrixXd& beta, const Eigen::MatrixXd* alpha,
                    std::span<const double> dxs, Eigen::MatrixXd& dbeta,
                    Eigen::MatrixXd* dalpha, std::span<double> dx0) {
  Check(tape.stages.size() == pipeline.stages.size(),
        ErrorCode::kInvalidArgument, "tape/pipeline stage mismatch");
  const size_t n = dxs.size();
  std::vector<double> g(dxs.begin(), dxs.end());
  std::vector<double> g_prev(n);
  for (size_t i = pipeline.stages.size(); i-- > 0;) {
    const auto& terms = pipeline.stages[i];
    const StageTape& st = tape.stages[i];
    Check(st.result.size() == n, ErrorCode::kInvalidArgument,
          "tape/gradient row mismatch");
    std::fill(g_prev.begin(), g_prev.end(), 0.0);
    for (size_t j = 0; j < terms.size(); ++j) {
      double gw = 0;
      const auto& o = st.outputs[j];
      const auto& d = st.derivs[j];
      const double w = st.weights[j];
      for (size_t r = 0; r < n; ++r) {
        gw += g[r] * o[r];
        g_prev[r] += w * d[r];
      }
      const auto t = static_cast<Eigen::Index>(terms[j].type);
      const auto k = static_cast<Eigen::Index>(terms[j].op);
      if (alpha == nullptr) {
        dbeta(t, k) += gw;
      } else {
        const auto stage = static_cast<Eigen::Index>(i);
        dbeta(t, k) += (*alpha)(stage, t) * gw;
        if (dalpha != nullptr) (*dalpha)(stage, t) += beta(t, k) * gw;
      }
    }
    for (size_t r = 0; r < n; ++r) g_prev[r] *= g[r];
    std::swap(g, g_prev);
  }
  Check(dx0.size() == n, ErrorCode::kInvalidArgument, "dx0 size mismatch");
  std::copy(g.begin(), g.end(), dx0.begin());
}

FittedPipeline FitStagewise(const PipelineLayout& layout,
                            const RelaxedParams& relaxed,
                            const FeatureMatrix& batch) {
  Check(batch.rows() > 0, ErrorCode::kInvalidArgument,
        "cannot fit the pipeline on an empty batch");
  Check(static_cast<size_t>(batch.cols()) == layout.column_count(),
        ErrorCode::kInvalidArgument, "batch/layout column mismatch");
  const std::vector<size_t> modal = ModalSlots(batch);
  const size_t stages = layout.num_stages();
  const auto n = static_cast<size_t>(batch.rows());

  FittedPipeline fitted;
  fitted.columns.resize(layout.column_count());
  std::vector<double> x(n), next;
  for (size_t c = 0; c < layout.column_count(); ++c) {
    const size_t u = layout.UnitOf(c);
    const Eigen::MatrixXd& beta = relaxed.beta[u];
    const Eigen::MatrixXd* alpha = AlphaOf(layout, relaxed, u);
    const ColumnMeta& meta = batch.meta[c];
    const auto col = batch.data.col(static_cast<Eigen::Index>(c));
    std::copy(col.begin(), col.end(), x.begin());

    ColumnPipeline& cp = fitted.columns[c];
    cp.stages.resize(stages);
    for (size_t i = 0; i < stages; ++i) {
      std::vector<StageTerm>& terms = cp.stages[i];
      const std::vector<size_t> types = StageTypes(layout, i);
      bool impute_only = true;
      for (const size_t t : types) {
        impute_only = impute_only &&
                      layout.catalog().types[t].type == TfType::kMissingImpute;
      }
      if (!impute_only) CheckNoMissing(x, i);
      const ColumnSummary summary = ColumnSummary::Build(x);
      for (const size_t t : types) {
        const auto& ops = layout.Ops(u, t);
        for (size_t k = 0; k < ops.size(); ++k) {
          const OperatorSpec& spec = ops[k];
          if (IsCategoricalImputer(spec)) {
            Check(meta.group >= 0, ErrorCode::kInternal,
                  "categorical imputer on a numeric column");
            const CategoricalGroup& g =
                batch.groups[static_cast<size_t>(meta.group)];
            const size_t slot = spec.kind == OperatorKind::kMostFrequentImpute
                                    ? modal[static_cast<size_t>(meta.group)]
                                    : g.columns.size() - 1;
            const double fill = g.columns[slot] == c ? 1.0 : 0.0;
            terms.push_back(
                {t, k, FittedOperator::ConstantFill(spec, fill, summary.sorted.size())});
          } else {
            terms.push_back({t, k, FittedOperator::Fit(spec, summary)});
          }
        }
      }
      if (i + 1 < stages) {
        MixStage(terms, i, beta, alpha, x, next);
        std::swap(x, next);
      }
    }
  }
  return fitted;
}

PipelineForward Forward(const PipelineLayout& layout,
                        const RelaxedParams& relaxed,
                        const FittedPipeline& fitted,
                        const Eigen::MatrixXd& x0) {
  Check(static_cast<size_t>(x0.cols()) == fitted.columns.size(),
        ErrorCode::kInvalidArgument, "input/pipeline column mismatch");
  PipelineForward out;
  out.output.resize(x0.rows(), x0.cols());
  out.tape.rows = x0.rows();
  out.tape.columns.resize(fitted.columns.size());
  for (size_t c = 0; c < fitted.columns.size(); ++c) {
    const size_t u = layout.UnitOf(c);
    const auto col = x0.col(static_cast<Eigen::Index>(c));
    const std::vector<double> input(col.begin(), col.end());
    out.tape.columns[c] = ForwardColumn(fitted.columns[c], relaxed.beta[u],
                                        AlphaOf(layout, relaxed, u), input);
    const auto& result = out.tape.columns[c].stages.empty()
                             ? input
                             : out.tape.columns[c].stages.back().result;
    out.output.col(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::VectorXd>(result.data(), x0.rows());
  }
  return out;
}

Eigen::MatrixXd Apply(const PipelineLayout& layout,
                      const RelaxedParams& relaxed,
                      const FittedPipeline& fitted, const Eigen::MatrixXd& x0) {
  Check(static_cast<size_t>(x0.cols()) == fitted.columns.size(),
        ErrorCode::kInvalidArgument, "input/pipeline column mismatch");
  Eigen::MatrixXd out(x0.rows(), x0.cols());
  std::vector<double> x, next;
  for (size_t c = 0; c < fitted.columns.size(); ++c) {
    const size_t u = layout.UnitOf(c);
    const auto col = x0.col(static_cast<Eigen::Index>(c));
    x.assign(col.begin(), col.end());
    const auto& stages = fitted.columns[c].stages;
    for (size_t i = 0; i < stages.size(); ++i) {
      if (!StageIsImputeOnly(stages[i])) CheckNoMissing(x, i);
      MixStage(stages[i], i, relaxed.beta[u], AlphaOf(layout, relaxed, u), x,
               next);
      std::swap(x, next);
    }
    CheckNoMissing(x, stages.size());
    out.col(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::VectorXd>(x.data(), x0.rows());
  }
  return out;
}

PipelineBackward Backward(const PipelineLayout& layout,
                          const RelaxedParams& relaxed,
                          const FittedPipeline& fitted,
                          const PipelineTape& tape,
                          const Eigen::MatrixXd& dxs) {
  Check(tape.columns.size() == fitted.columns.size() &&
            static_cast<size_t>(dxs.cols()) == tape.columns.size() &&
            dxs.rows() == tape.rows,
        ErrorCode::kInvalidArgument, "tape/gradient shape mismatch");
  PipelineBackward out;
  out.grads = WeightGrads::Zeros(layout);
  out.dx0.resize(dxs.rows(), dxs.cols());
  std::vector<double> g(static_cast<size_t>(dxs.rows()));
  std::vector<double> dx0(g.size());
  for (size_t c = 0; c < tape.columns.size(); ++c) {
    const size_t u = layout.UnitOf(c);
    const auto col = dxs.col(static_cast<Eigen::Index>(c));
    std::copy(col.begin(), col.end(), g.begin());
    Eigen::MatrixXd* dalpha =
        layout.mode() == PrototypeMode::kFlex ? &out.grads.dalpha[u] : nullptr;
    BackwardColumn(fitted.columns[c], tape.columns[c], relaxed.beta[u],
                   AlphaOf(layout, relaxed, u), g, out.grads.dbeta[u], dalpha,
                   dx0);
    out.dx0.col(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::VectorXd>(dx0.data(), dxs.rows());
  }
  return out;
}

}  // namespace prepsearch
