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

#include "prepsearch/pipeline_params.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prepsearch/error.h"

namespace prepsearch {

Eigen::MatrixXd BetaFromTau(const Eigen::MatrixXd& tau,
                            const MaskMatrix& mask) {
  Check(tau.rows() == mask.rows() && tau.cols() == mask.cols(),
        ErrorCode::kInvalidArgument, "tau/mask shape mismatch");
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(tau.rows(), tau.cols());
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < tau.cols(); ++j) {
      if (mask(i, j)) top = std::max(top, tau(i, j));
    }
    Check(std::isfinite(top), ErrorCode::kInvalidArgument,
          "tau row has no valid slot or a non-finite logit");
    double total = 0;
    for (Eigen::Index j = 0; j < tau.cols(); ++j) {
      if (!mask(i, j)) continue;
      beta(i, j) = std::exp(tau(i, j) - top);
      total += beta(i, j);
    }
    beta.row(i) /= total;
  }
  return beta;
}

Eigen::MatrixXd SoftmaxBackward(const Eigen::MatrixXd& beta,
                                const MaskMatrix& mask,
                                const Eigen::MatrixXd& dbeta) {
  Eigen::MatrixXd dtau = Eigen::MatrixXd::Zero(beta.rows(), beta.cols());
  for (Eigen::Index i = 0; i < beta.rows(); ++i) {
    double inner = 0;
    for (Eigen::Index j = 0; j < beta.cols(); ++j) {
      if (mask(i, j)) inner += beta(i, j) * dbeta(i, j);
    }
    for (Eigen::Index j = 0; j < beta.cols(); ++j) {
      if (mask(i, j)) dtau(i, j) = beta(i, j) * (dbeta(i, j) - inner);
    }
  }
  return dtau;
}

namespace {

double DeviationFromDoublyStochastic(const Eigen::MatrixXd& m) {
  const double rows = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double cols = (m.colwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(rows, cols);
}

}  // namespace

SinkhornTrace Sinkhorn(const Eigen::MatrixXd& x,
                       const SinkhornOptions& options) {
  Check(x.rows() == x.cols() && x.rows() > 0, ErrorCode::kInvalidArgument,
        "Sinkhorn input must be a non-empty square matrix");
  Check((x.array() > 0).all() && x.allFinite(), ErrorCode::kInvalidArgument,
        "Sinkhorn input must be strictly positive");
  Check(options.tol > 0 && options.max_iters >= 1,
        ErrorCode::kInvalidArgument, "invalid Sinkhorn options");
  SinkhornTrace trace;
  Eigen::MatrixXd s = x;
  for (int l = 0; l < options.max_iters; ++l) {
    trace.before_col.push_back(s);
    s = s.array().rowwise() / s.colwise().sum().array();
    trace.before_row.push_back(s);
    s = s.array().colwise() / s.rowwise().sum().array();
    ++trace.iterations;
    if (DeviationFromDoublyStochastic(s) < options.tol) {
      trace.converged = true;
      break;
    }
  }
  trace.result = std::move(s);
  return trace;
}

Eigen::MatrixXd SinkhornBackward(const SinkhornTrace& trace,
                                 const Eigen::MatrixXd& dresult) {
  Eigen::MatrixXd g = dresult;
  for (int l = trace.iterations - 1; l >= 0; --l) {
    {
      // Row step: y_ij = a_ij / r_i.
      const Eigen::MatrixXd& a = trace.before_row[l];
      const Eigen::VectorXd r = a.rowwise().sum();
      const Eigen::MatrixXd y = a.array().colwise() / r.array();
      const Eigen::VectorXd inner = (g.array() * y.array()).rowwise().sum();
      g = (g.colwise() - inner).array().colwise() / r.array();
    }
    {
      // Column step: y_ij = a_ij / c_j.
      const Eigen::MatrixXd& a = trace.before_col[l];
      const Eigen::RowVectorXd c = a.colwise().sum();
      const Eigen::MatrixXd y = a.array().rowwise() / c.array();
      const Eigen::RowVectorXd inner = (g.array() * y.array()).colwise().sum();
      g = (g.rowwise() - inner).array().rowwise() / c.array();
    }
  }
  return g;
}

Eigen::MatrixXd AlphaFromPsi(const Eigen::MatrixXd& psi,
                             const SinkhornOptions& options) {
  Check(psi.allFinite(), ErrorCode::kInvalidArgument, "psi must be finite");
  const Eigen::MatrixXd theta = (psi.array() - psi.maxCoeff()).exp();
  return Sinkhorn(theta, options).result;
}

namespace {

// Indices (rows, cols) of the free block of a pinned alpha.
void FreeBlock(Eigen::Index s, int pinned, std::vector<Eigen::Index>& rows,
               std::vector<Eigen::Index>& cols) {
  rows.clear();
  cols.clear();
  for (Eigen::Index i = pinned >= 0 ? 1 : 0; i < s; ++i) rows.push_back(i);
  for (Eigen::Index j = 0; j < s; ++j) {
    if (j != pinned) cols.push_back(j);
  }
}

}  // namespace

AlphaTrace PinnedAlpha(const Eigen::MatrixXd& psi, int pinned,
                       const SinkhornOptions& options) {
  Check(psi.rows() == psi.cols(), ErrorCode::kInvalidArgument,
        "psi must be square");
  Check(psi.allFinite(), ErrorCode::kInvalidArgument, "psi must be finite");
  const Eigen::Index s = psi.rows();
  AlphaTrace trace;
  trace.pinned = pinned;
  trace.alpha = Eigen::MatrixXd::Zero(s, s);
  if (pinned >= 0) trace.alpha(0, pinned) = 1.0;
  std::vector<Eigen::Index> rows, cols;
  FreeBlock(s, pinned, rows, cols);
  if (rows.empty()) return trace;

  const auto b = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd block(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) block(i, j) = psi(rows[i], cols[j]);
  }
  trace.shift = block.maxCoeff();
  trace.theta = (block.array() - trace.shift).exp();
  trace.sinkhorn = Sinkhorn(trace.theta, options);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      trace.alpha(rows[i], cols[j]) = trace.sinkhorn.result(i, j);
    }
  }
  return trace;
}

Eigen::MatrixXd PinnedAlphaBackward(const AlphaTrace& trace,
                                    const Eigen::MatrixXd& dalpha) {
  const Eigen::Index s = trace.alpha.rows();
  Eigen::MatrixXd dpsi = Eigen::MatrixXd::Zero(s, s);
  std::vector<Eigen::Index> rows, cols;
  FreeBlock(s, trace.pinned, rows, cols);
  if (rows.empty()) return dpsi;
  const auto b = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd dblock(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) dblock(i, j) = dalpha(rows[i], cols[j]);
  }
  // The max shift cancels under normalization, so d theta / d psi = theta.
  const Eigen::MatrixXd dtheta = SinkhornBackward(trace.sinkhorn, dblock);
  const Eigen::MatrixXd dblock_psi = dtheta.cwiseProduct(trace.theta);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      dpsi(rows[i], cols[j]) = dblock_psi(i, j);
    }
  }
  return dpsi;
}

size_t ArgmaxRow(const Eigen::MatrixXd& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return static_cast<size_t>(best);
}

std::vector<size_t> DiscreteOrder(const Eigen::MatrixXd& alpha) {
  std::vector<bool> used(static_cast<size_t>(alpha.cols()), false);
  std::vector<size_t> order;
  for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < alpha.cols(); ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      if (best < 0 || alpha(i, j) > alpha(i, best)) best = j;
    }
    used[static_cast<size_t>(best)] = true;
    order.push_back(static_cast<size_t>(best));
  }
  return order;
}

PipelineLayout PipelineLayout::Build(Catalog catalog,
                                     const FeatureMatrix& schema,
                                     const LayoutOptions& options) {
  PipelineLayout layout;
  layout.catalog_ = std::move(catalog);
  layout.options_ = options;
  const Catalog& cat = layout.catalog_;
  layout.max_ops_ = cat.MaxOps();
  const size_t s = cat.types.size();

  if (options.mode == PrototypeMode::kFix) {
    if (options.prototype.empty()) {
      for (size_t t = 0; t < s; ++t) layout.prototype_.push_back(t);
    } else {
      for (TfType type : options.prototype) {
        const int idx = cat.IndexOf(type);
        Check(idx >= 0, ErrorCode::kInvalidArgument,
              std::string("prototype type not in catalog: ") +
                  TfTypeName(type));
        Check(std::find(layout.prototype_.begin(), layout.prototype_.end(),
                        static_cast<size_t>(idx)) == layout.prototype_.end(),
              ErrorCode::kInvalidArgument, "prototype repeats a TF type");
        layout.prototype_.push_back(static_cast<size_t>(idx));
      }
    }
  } else {
    layout.pinned_ = cat.IndexOf(TfType::kMissingImpute);
  }

  layout.numeric_ops_.resize(s);
  layout.categorical_ops_.resize(s);
  const auto m = static_cast<Eigen::Index>(layout.max_ops_);
  layout.numeric_mask_ = MaskMatrix::Constant(static_cast<Eigen::Index>(s), m, false);
  layout.categorical_mask_ = layout.numeric_mask_;
  for (size_t t = 0; t < s; ++t) {
    const TypeCatalog& tc = cat.types[t];
    layout.numeric_ops_[t] = tc.ops;
    if (tc.type == TfType::kMissingImpute) {
      layout.categorical_ops_[t] = tc.categorical_ops;
    } else if (options.categorical_full_search) {
      layout.categorical_ops_[t] = tc.ops;
    } else {
      layout.categorical_ops_[t] = {OperatorSpec::Identity(tc.type)};
    }
    for (size_t k = 0; k < layout.numeric_ops_[t].size(); ++k) {
      layout.numeric_mask_(static_cast<Eigen::Index>(t),
                           static_cast<Eigen::Index>(k)) = true;
    }
    for (size_t k = 0; k < layout.categorical_ops_[t].size(); ++k) {
      layout.categorical_mask_(static_cast<Eigen::Index>(t),
                               static_cast<Eigen::Index>(k)) = true;
    }
  }

  const size_t c = schema.meta.size();
  layout.column_unit_.assign(c, 0);
  if (options.feature_wise) {
    std::vector<int> group_unit(schema.groups.size(), -1);
    for (size_t col = 0; col < c; ++col) {
      const ColumnMeta& meta = schema.meta[col];
      if (meta.group < 0) {
        layout.column_unit_[col] = layout.units_.size();
        layout.units_.push_back({meta.source, false, {col}});
        continue;
      }
      int& u = group_unit[static_cast<size_t>(meta.group)];
      if (u < 0) {
        u = static_cast<int>(layout.units_.size());
        layout.units_.push_back({meta.source, true, {}});
      }
      layout.column_unit_[col] = static_cast<size_t>(u);
      layout.units_[static_cast<size_t>(u)].columns.push_back(col);
    }
  } else {
    PipelineUnit numeric{"shared_numeric", false, {}};
    PipelineUnit categorical{"shared_categorical", true, {}};
    for (size_t col = 0; col < c; ++col) {
      (schema.meta[col].group < 0 ? numeric : categorical)
          .columns.push_back(col);
    }
    for (PipelineUnit* unit : {&numeric, &categorical}) {
      if (unit->columns.empty()) continue;
      for (const size_t col : unit->columns) {
        layout.column_unit_[col] = layout.units_.size();
      }
      layout.units_.push_back(std::move(*unit));
    }
  }
  return layout;
}

size_t PipelineLayout::num_stages() const {
  return options_.mode == PrototypeMode::kFix ? prototype_.size()
                                              : catalog_.types.size();
}

const std::vector<OperatorSpec>& PipelineLayout::Ops(size_t unit,
                                                     size_t type) const {
  return units_[unit].categorical ? categorical_ops_[type] : numeric_ops_[type];
}

const MaskMatrix& PipelineLayout::Mask(size_t unit) const {
  return units_[unit].categorical ? categorical_mask_ : numeric_mask_;
}

PipelineParams PipelineParams::Init(const PipelineLayout& layout,
                                    double noise, Rng& rng) {
  std::uniform_real_distribution<double> jitter(-noise, noise);
  auto draw = [&]() { return noise > 0 ? jitter(rng) : 0.0; };
  const auto s = static_cast<Eigen::Index>(layout.num_types());
  const auto m = static_cast<Eigen::Index>(layout.max_ops());
  PipelineParams params;
  for (size_t u = 0; u < layout.units().size(); ++u) {
    const MaskMatrix& mask = layout.Mask(u);
    Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(s, m);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (mask(i, j)) tau(i, j) = draw();
      }
    }
    params.tau.push_back(std::move(tau));
    if (layout.mode() == PrototypeMode::kFlex) {
      Eigen::MatrixXd psi(s, s);
      for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = 0; j < s; ++j) psi(i, j) = draw();
      }
      params.psi.push_back(std::move(psi));
    }
  }
  return params;
}

PipelineParams PipelineParams::ZerosLike(const PipelineParams& other) {
  PipelineParams z;
  for (const auto& t : other.tau) z.tau.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  for (const auto& p : other.psi) z.psi.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  return z;
}

namespace {

Eigen::Index TotalSize(const std::vector<Eigen::MatrixXd>& a,
                       const std::vector<Eigen::MatrixXd>& b) {
  Eigen::Index n = 0;
  for (const auto& m : a) n += m.size();
  for (const auto& m : b) n += m.size();
  return n;
}

Eigen::VectorXd PackAll(const std::vector<Eigen::MatrixXd>& a,
                        const std::vector<Eigen::MatrixXd>& b) {
  Eigen::VectorXd flat(TotalSize(a, b));
  Eigen::Index at = 0;
  for (const auto* list : {&a, &b}) {
    for (const auto& m : *list) {
      flat.segment(at, m.size()) = m.reshaped();
      at += m.size();
    }
  }
  return flat;
}

void UnpackAll(const Eigen::VectorXd& flat, std::vector<Eigen::MatrixXd>& a,
               std::vector<Eigen::MatrixXd>& b) {
  Check(flat.size() == TotalSize(a, b), ErrorCode::kInvalidArgument,
        "flat parameter size mismatch");
  Eigen::Index at = 0;
  for (auto* list : {&a, &b}) {
    for (auto& m : *list) {
      m.reshaped() = flat.segment(at, m.size());
      at += m.size();
    }
  }
}

nlohmann::json MatrixToJson(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.row(i).begin(), m.row(i).end());
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    Check(static_cast<Eigen::Index>(rows[i].size()) == c,
          ErrorCode::kInvalidArgument, "ragged matrix");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

Eigen::Index PipelineParams::Size() const { return TotalSize(tau, psi); }

Eigen::VectorXd PipelineParams::Pack() const { return PackAll(tau, psi); }

void PipelineParams::Unpack(const Eigen::VectorXd& flat) {
  UnpackAll(flat, tau, psi);
}

nlohmann::json PipelineParams::ToJson() const {
  nlohmann::json doc;
  auto& t = doc["tau"] = nlohmann::json::array();
  for (const auto& m : tau) t.push_back(MatrixToJson(m));
  auto& p = doc["psi"] = nlohmann::json::array();
  for (const auto& m : psi) p.push_back(MatrixToJson(m));
  return doc;
}

PipelineParams PipelineParams::FromJson(const nlohmann::json& doc) {
  PipelineParams params;
  for (const auto& m : doc.at("tau")) params.tau.push_back(MatrixFromJson(m));
  if (doc.contains("psi")) {
    for (const auto& m : doc.at("psi")) params.psi.push_back(MatrixFromJson(m));
  }
  return params;
}

RelaxedParams Relax(const PipelineLayout& layout, const PipelineParams& params,
                    const SinkhornOptions& options) {
  const size_t units = layout.units().size();
  Check(params.tau.size() == units, ErrorCode::kInvalidArgument,
        "parameter/layout unit count mismatch");
  RelaxedParams relaxed;
  for (size_t u = 0; u < units; ++u) {
    relaxed.beta.push_back(BetaFromTau(params.tau[u], layout.Mask(u)));
  }
  if (layout.mode() == PrototypeMode::kFlex) {
    Check(params.psi.size() == units, ErrorCode::kInvalidArgument,
          "flex mode requires psi for every unit");
    for (size_t u = 0; u < units; ++u) {
      relaxed.alpha.push_back(
          PinnedAlpha(params.psi[u], layout.pinned_type(), options));
    }
  }
  return relaxed;
}

WeightGrads WeightGrads::Zeros(const PipelineLayout& layout) {
  WeightGrads g;
  const auto s = static_cast<Eigen::Index>(layout.num_types());
  const auto m = static_cast<Eigen::Index>(layout.max_ops());
  for (size_t u = 0; u < layout.units().size(); ++u) {
    g.dbeta.push_back(Eigen::MatrixXd::Zero(s, m));
    if (layout.mode() == PrototypeMode::kFlex) {
      g.dalpha.push_back(Eigen::MatrixXd::Zero(s, s));
    }
  }
  return g;
}

Eigen::VectorXd WeightGrads::Pack() const { return PackAll(dbeta, dalpha); }

void WeightGrads::Unpack(const Eigen::VectorXd& flat) {
  UnpackAll(flat, dbeta, dalpha);
}

PipelineParams ChainToParams(const PipelineLayout& layout,
                             const RelaxedParams& relaxed,
                             const WeightGrads& grads) {
  PipelineParams out;
  for (size_t u = 0; u < layout.units().size(); ++u) {
    out.tau.push_back(
        SoftmaxBackward(relaxed.beta[u], layout.Mask(u), grads.dbeta[u]));
    if (layout.mode() == PrototypeMode::kFlex) {
      out.psi.push_back(PinnedAlphaBackward(relaxed.alpha[u], grads.dalpha[u]));
    }
  }
  return out;
}

nlohmann::json ExportDiscrete(const PipelineLayout& layout,
                              const RelaxedParams& relaxed,
                              const std::vector<std::string>& column_names) {
  nlohmann::json doc;
  doc["mode"] = layout.mode() == PrototypeMode::kFix ? "fix" : "flex";
  auto& units = doc["features"] = nlohmann::json::array();
  for (size_t u = 0; u < layout.units().size(); ++u) {
    const PipelineUnit& unit = layout.units()[u];
    nlohmann::json ju;
    ju["feature"] = unit.name;
    ju["categorical"] = unit.categorical;
    auto& cols = ju["columns"] = nlohmann::json::array();
    for (const size_t c : unit.columns) {
      cols.push_back(c < column_names.size() ? column_names[c]
                                             : std::to_string(c));
    }
    const std::vector<size_t> order =
        layout.mode() == PrototypeMode::kFix
            ? layout.prototype()
            : DiscreteOrder(relaxed.Alpha(u));
    auto& stages = ju["pipeline"] = nlohmann::json::array();
    for (size_t i = 0; i < order.size(); ++i) {
      const size_t type = order[i];
      const auto row = static_cast<Eigen::Index>(type);
      const size_t k = ArgmaxRow(relaxed.beta[u], row);
      const OperatorSpec& spec = layout.Ops(u, type)[k];
      nlohmann::json js;
      js["tf_type"] = TfTypeName(layout.catalog().types[type].type);
      js["operator"] = spec.Name();
      js["hyperparams"] = spec.param;
      js["beta"] = relaxed.beta[u](row, static_cast<Eigen::Index>(k));
      if (layout.mode() == PrototypeMode::kFlex) {
        js["alpha"] = relaxed.Alpha(u)(static_cast<Eigen::Index>(i), row);
      }
      stages.push_back(std::move(js));
    }
    units.push_back(std::move(ju));
  }
  return doc;
}

}  // namespace prepsearch
