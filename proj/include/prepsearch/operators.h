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

#ifndef PREPSEARCH_OPERATORS_H_
#define PREPSEARCH_OPERATORS_H_

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace prepsearch {

enum class TfType { kMissingImpute, kNormalize, kOutlierRepair, kDiscretize };

enum class OperatorKind {
  kIdentity,
  kMeanImpute,
  kMedianImpute,
  kModeImpute,
  kMostFrequentImpute,  // categorical: fill with the group's modal one-hot slot
  kDummyImpute,         // categorical: fill with the MISSING slot
  kStandardize,
  kMinMax,
  kRobust,
  kMaxAbs,
  kZScore,
  kMad,
  kIqr,
  kUniformBins,
  kQuantileBins,
};

const char* TfTypeName(TfType type);
TfType ParseTfType(const std::string& name);

struct OperatorSpec {
  TfType type = TfType::kNormalize;
  OperatorKind kind = OperatorKind::kIdentity;
  double param = 0;  // k for z-score/MAD/IQR, bin count for discretizers

  bool IsIdentity() const { return kind == OperatorKind::kIdentity; }
  bool IsImputer() const { return type == TfType::kMissingImpute; }
  std::string Name() const;
  void Validate() const;

  static OperatorSpec Identity(TfType type) {
    return {type, OperatorKind::kIdentity, 0};
  }
  // Parses "mean", "zscore(3)", "quantile(10)", ...
  static OperatorSpec Parse(const std::string& name);

  friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;
};

// Operator lists per TF type. Identity is implicit for every type except
// imputation and is always placed first.
struct CatalogConfig {
  std::vector<TfType> types = {TfType::kMissingImpute, TfType::kNormalize,
                               TfType::kOutlierRepair, TfType::kDiscretize};
  std::vector<std::string> imputers = {"mean", "median", "mode"};
  std::vector<std::string> normalizers = {"standardize", "minmax", "robust",
                                          "maxabs"};
  std::vector<std::string> outlier_repairs = {
      "zscore(2)", "zscore(3)", "zscore(4)", "mad(2)", "mad(3)",
      "mad(4)",    "iqr(1.5)",  "iqr(2)"};
  std::vector<std::string> discretizers = {"uniform(5)", "uniform(10)",
                                           "quantile(5)", "quantile(10)"};

  // Keys: "types", "missing_impute", "normalize", "outlier_repair",
  // "discretize". Absent keys keep their defaults.
  static CatalogConfig FromJson(const nlohmann::json& doc);
  nlohmann::json ToJson() const;
};

struct TypeCatalog {
  TfType type;
  std::vector<OperatorSpec> ops;
  // Only populated for imputation: the two categorical imputers.
  std::vector<OperatorSpec> categorical_ops;
};

struct Catalog {
  std::vector<TypeCatalog> types;

  // m: the longest operator list over all types.
  size_t MaxOps() const;
  // Index of the type in `types`, or -1.
  int IndexOf(TfType type) const;
};

Catalog BuildCatalog(const CatalogConfig& config = {});

// Statistics for one column, shared by every operator fitted on it.
struct ColumnSummary {
  std::vector<double> sorted;  // observed values only
  double mean = 0;
  double std = 0;  // population
  double min = 0;
  double max = 0;
  double max_abs = 0;
  double median = 0;
  double q1 = 0;
  double q3 = 0;
  double mad = 0;
  double mode = 0;

  // NaN entries are skipped. An all-missing column yields an empty summary.
  static ColumnSummary Build(std::span<const double> values);
  bool empty() const { return sorted.empty(); }
};

// Linear interpolation between order statistics over sorted input.
double Quantile(std::span<const double> sorted, double q);

struct OperatorStats {
  double center = 0;  // affine maps: (x - center) / scale
  double scale = 1;
  double lo = 0;  // winsorizing bounds
  double hi = 0;
  double fill = 0;            // imputed value
  std::vector<double> edges;  // interior bin edges, strictly increasing
};

class FittedOperator {
 public:
  static FittedOperator Fit(const OperatorSpec& spec,
                            std::span<const double> values);
  static FittedOperator Fit(const OperatorSpec& spec,
                            const ColumnSummary& summary);
  // Categorical imputers are fitted at group level; the caller supplies the
  // per-column fill value (1 on the chosen slot, 0 elsewhere).
  static FittedOperator ConstantFill(const OperatorSpec& spec, double fill,
                                     size_t fit_count);
  static FittedOperator FromStats(const OperatorSpec& spec,
                                  OperatorStats stats, size_t fit_count = 0);

  double Transform(double x) const;
  // Central difference with frozen stats. Identity and imputers on observed
  // inputs have slope exactly 1; missing inputs give 0, since an imputer's
  // output does not depend on them.
  double NumDerivative(double x, double eps) const;
  double NumDerivative(double x) const {
    return NumDerivative(x, DefaultStep(x));
  }
  static double DefaultStep(double x);

  // Column versions of Transform and NumDerivative (default step); the
  // results match the scalar calls bit for bit.
  void TransformBatch(std::span<const double> x, std::span<double> out) const;
  void DerivativeBatch(std::span<const double> x, std::span<double> out) const;

  const OperatorSpec& spec() const { return spec_; }
  const OperatorStats& stats() const { return stats_; }
  size_t fit_count() const { return fit_count_; }

 private:
  FittedOperator(const OperatorSpec& spec, OperatorStats stats,
                 size_t fit_count)
      : spec_(spec), stats_(std::move(stats)), fit_count_(fit_count) {}

  OperatorSpec spec_;
  OperatorStats stats_;
  size_t fit_count_ = 0;
};

}  // namespace prepsearch

#endif  // PREPSEARCH_OPERATORS_H_
