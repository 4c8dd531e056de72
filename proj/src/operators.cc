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

#include "prepsearch/operators.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "prepsearch/error.h"

namespace prepsearch {
namespace {

struct KindInfo {
  OperatorKind kind;
  TfType type;
  const char* name;
  bool parameterized;
};

constexpr KindInfo kKinds[] = {
    {OperatorKind::kIdentity, TfType::kNormalize, "identity", false},
    {OperatorKind::kMeanImpute, TfType::kMissingImpute, "mean", false},
    {OperatorKind::kMedianImpute, TfType::kMissingImpute, "median", false},
    {OperatorKind::kModeImpute, TfType::kMissingImpute, "mode", false},
    {OperatorKind::kMostFrequentImpute, TfType::kMissingImpute,
     "most_frequent", false},
    {OperatorKind::kDummyImpute, TfType::kMissingImpute, "dummy", false},
    {OperatorKind::kStandardize, TfType::kNormalize, "standardize", false},
    {OperatorKind::kMinMax, TfType::kNormalize, "minmax", false},
    {OperatorKind::kRobust, TfType::kNormalize, "robust", false},
    {OperatorKind::kMaxAbs, TfType::kNormalize, "maxabs", false},
    {OperatorKind::kZScore, TfType::kOutlierRepair, "zscore", true},
    {OperatorKind::kMad, TfType::kOutlierRepair, "mad", true},
    {OperatorKind::kIqr, TfType::kOutlierRepair, "iqr", true},
    {OperatorKind::kUniformBins, TfType::kDiscretize, "uniform", true},
    {OperatorKind::kQuantileBins, TfType::kDiscretize, "quantile", true},
};

const KindInfo& Info(OperatorKind kind) {
  for (const KindInfo& k : kKinds) {
    if (k.kind == kind) return k;
  }
  Fail(ErrorCode::kInternal, "unknown operator kind");
}

// Degenerate spreads fall back to 1 so every transform stays finite.
double SafeSpread(double s) { return s > 0 && std::isfinite(s) ? s : 1.0; }

std::string FormatParam(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

std::vector<OperatorSpec> ParseList(TfType type,
                                    const std::vector<std::string>& names) {
  std::vector<OperatorSpec> ops;
  for (const std::string& n : names) {
    OperatorSpec spec = OperatorSpec::Parse(n);
    if (spec.IsIdentity()) continue;  // implicit
    Check(spec.type == type, ErrorCode::kInvalidArgument,
          "operator '" + n + "' does not belong to TF type " +
              TfTypeName(type));
    ops.push_back(spec);
  }
  return ops;
}

}  // namespace

const char* TfTypeName(TfType type) {
  switch (type) {
    case TfType::kMissingImpute:
      return "missing_impute";
    case TfType::kNormalize:
      return "normalize";
    case TfType::kOutlierRepair:
      return "outlier_repair";
    case TfType::kDiscretize:
      return "discretize";
  }
  return "?";
}

TfType ParseTfType(const std::string& name) {
  for (TfType t : {TfType::kMissingImpute, TfType::kNormalize,
                   TfType::kOutlierRepair, TfType::kDiscretize}) {
    if (name == TfTypeName(t)) return t;
  }
  if (name == "impute") return TfType::kMissingImpute;
  if (name == "outlier") return TfType::kOutlierRepair;
  Fail(ErrorCode::kInvalidArgument, "unknown TF type '" + name + "'");
}

std::string OperatorSpec::Name() const {
  const KindInfo& info = Info(kind);
  if (!info.parameterized) return info.name;
  return std::string(info.name) + "(" + FormatParam(param) + ")";
}

void OperatorSpec::Validate() const {
  switch (kind) {
    case OperatorKind::kZScore:
    case OperatorKind::kMad:
    case OperatorKind::kIqr:
      Check(param > 0 && std::isfinite(param), ErrorCode::kInvalidArgument,
            Name() + ": k must be > 0");
      break;
    case OperatorKind::kUniformBins:
    case OperatorKind::kQuantileBins:
      Check(param >= 2 && param == std::floor(param) && param < 1e6,
            ErrorCode::kInvalidArgument,
            Name() + ": bin count must be an integer >= 2");
      break;
    default:
      break;
  }
  if (kind != OperatorKind::kIdentity) {
    Check(Info(kind).type == type, ErrorCode::kInvalidArgument,
          Name() + " is not a " + TfTypeName(type) + " operator");
  } else {
    Check(type != TfType::kMissingImpute, ErrorCode::kInvalidArgument,
          "imputation has no identity operator");
  }
}

OperatorSpec OperatorSpec::Parse(const std::string& text) {
  std::string name = text;
  double param = 0;
  bool has_param = false;
  if (const auto open = text.find('('); open != std::string::npos) {
    Check(text.back() == ')', ErrorCode::kInvalidArgument,
          "malformed operator '" + text + "'");
    name = text.substr(0, open);
    const std::string arg = text.substr(open + 1, text.size() - open - 2);
    try {
      size_t used = 0;
      param = std::stod(arg, &used);
      Check(used == arg.size(), ErrorCode::kInvalidArgument,
            "malformed operator parameter in '" + text + "'");
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kInvalidArgument,
           "malformed operator parameter in '" + text + "'");
    }
    has_param = true;
  }
  for (const KindInfo& k : kKinds) {
    if (name != k.name) continue;
    Check(has_param == k.parameterized, ErrorCode::kInvalidArgument,
          "operator '" + text + "' has the wrong parameter arity");
    OperatorSpec spec{k.type, k.kind, param};
    spec.Validate();
    return spec;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown operator '" + text + "'");
}

CatalogConfig CatalogConfig::FromJson(const nlohmann::json& doc) {
  CatalogConfig config;
  Check(doc.is_object(), ErrorCode::kInvalidArgument,
        "operator config must be an object");
  if (doc.contains("types")) {
    config.types.clear();
    for (const auto& t : doc.at("types")) {
      config.types.push_back(ParseTfType(t.get<std::string>()));
    }
  }
  auto read = [&](const char* key, std::vector<std::string>& out) {
    if (doc.contains(key)) out = doc.at(key).get<std::vector<std::string>>();
  };
  read("missing_impute", config.imputers);
  read("normalize", config.normalizers);
  read("outlier_repair", config.outlier_repairs);
  read("discretize", config.discretizers);
  return config;
}

nlohmann::json CatalogConfig::ToJson() const {
  nlohmann::json doc;
  auto& t = doc["types"] = nlohmann::json::array();
  for (TfType type : types) t.push_back(TfTypeName(type));
  doc["missing_impute"] = imputers;
  doc["normalize"] = normalizers;
  doc["outlier_repair"] = outlier_repairs;
  doc["discretize"] = discretizers;
  return doc;
}

size_t Catalog::MaxOps() const {
  size_t m = 0;
  for (const TypeCatalog& t : types) {
    m = std::max({m, t.ops.size(), t.categorical_ops.size()});
  }
  return m;
}

int Catalog::IndexOf(TfType type) const {
  for (size_t i = 0; i < types.size(); ++i) {
    if (types[i].type == type) return static_cast<int>(i);
  }
  return -1;
}

Catalog BuildCatalog(const CatalogConfig& config) {
  Catalog catalog;
  for (TfType type : config.types) {
    Check(catalog.IndexOf(type) < 0, ErrorCode::kInvalidArgument,
          std::string("TF type listed twice: ") + TfTypeName(type));
    TypeCatalog entry{type, {}, {}};
    switch (type) {
      case TfType::kMissingImpute:
        entry.ops = ParseList(type, config.imputers);
        entry.categorical_ops = {
            {type, OperatorKind::kMostFrequentImpute, 0},
            {type, OperatorKind::kDummyImpute, 0}};
        break;
      case TfType::kNormalize:
        entry.ops = ParseList(type, config.normalizers);
        break;
      case TfType::kOutlierRepair:
        entry.ops = ParseList(type, config.outlier_repairs);
        break;
      case TfType::kDiscretize:
        entry.ops = ParseList(type, config.discretizers);
        break;
    }
    if (type != TfType::kMissingImpute) {
      entry.ops.insert(entry.ops.begin(), OperatorSpec::Identity(type));
    }
    Check(!entry.ops.empty(), ErrorCode::kInvalidArgument,
          std::string("TF type has no operators: ") + TfTypeName(type));
    for (size_t i = 0; i < entry.ops.size(); ++i) {
      for (size_t j = 0; j < i; ++j) {
        Check(!(entry.ops[i] == entry.ops[j]), ErrorCode::kInvalidArgument,
              "duplicate operator " + entry.ops[i].Name());
      }
    }
    catalog.types.push_back(std::move(entry));
  }
  Check(!catalog.types.empty(), ErrorCode::kInvalidArgument,
        "catalog has no TF types");
  return catalog;
}

double Quantile(std::span<const double> sorted, double q) {
  Check(!sorted.empty(), ErrorCode::kInvalidArgument,
        "quantile of empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ColumnSummary ColumnSummary::Build(std::span<const double> values) {
  ColumnSummary s;
  s.sorted.reserve(values.size());
  for (const double v : values) {
    if (!std::isnan(v)) s.sorted.push_back(v);
  }
  if (s.sorted.empty()) return s;
  std::sort(s.sorted.begin(), s.sorted.end());
  const auto n = static_cast<double>(s.sorted.size());
  double sum = 0;
  for (const double v : s.sorted) sum += v;
  s.mean = sum / n;
  double ss = 0;
  for (const double v : s.sorted) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  s.min = s.sorted.front();
  s.max = s.sorted.back();
  s.max_abs = std::max(std::abs(s.min), std::abs(s.max));
  s.median = Quantile(s.sorted, 0.5);
  s.q1 = Quantile(s.sorted, 0.25);
  s.q3 = Quantile(s.sorted, 0.75);

  std::vector<double> dev(s.sorted.size());
  for (size_t i = 0; i < dev.size(); ++i) {
    dev[i] = std::abs(s.sorted[i] - s.median);
  }
  std::sort(dev.begin(), dev.end());
  s.mad = Quantile(dev, 0.5);

  // Mode over the sorted run-lengths; the first maximal run is the smallest.
  size_t best_len = 0;
  for (size_t i = 0; i < s.sorted.size();) {
    size_t j = i;
    while (j < s.sorted.size() && s.sorted[j] == s.sorted[i]) ++j;
    if (j - i > best_len) {
      best_len = j - i;
      s.mode = s.sorted[i];
    }
    i = j;
  }
  return s;
}

FittedOperator FittedOperator::Fit(const OperatorSpec& spec,
                                   std::span<const double> values) {
  Check(!values.empty(), ErrorCode::kInvalidArgument,
        "cannot fit " + spec.Name() + " on empty input");
  if (!spec.IsImputer()) {
    for (const double v : values) {
      if (!std::isfinite(v)) {
        Fail(ErrorCode::kDataError,
             spec.Name() + " fitted on a missing or non-finite value");
      }
    }
  }
  return Fit(spec, ColumnSummary::Build(values));
}

FittedOperator FittedOperator::Fit(const OperatorSpec& spec,
                                   const ColumnSummary& s) {
  OperatorStats st;
  const size_t count = s.sorted.size();
  if (s.empty()) {
    // Only imputers can see an all-missing batch column; they fill with 0.
    Check(spec.IsImputer() && spec.kind != OperatorKind::kMostFrequentImpute &&
              spec.kind != OperatorKind::kDummyImpute,
          ErrorCode::kInvalidArgument,
          "cannot fit " + spec.Name() + " on empty input");
    return FittedOperator(spec, st, 0);
  }
  switch (spec.kind) {
    case OperatorKind::kIdentity:
      break;
    case OperatorKind::kMeanImpute:
      st.fill = s.mean;
      break;
    case OperatorKind::kMedianImpute:
      st.fill = s.median;
      break;
    case OperatorKind::kModeImpute:
      st.fill = s.mode;
      break;
    case OperatorKind::kMostFrequentImpute:
    case OperatorKind::kDummyImpute:
      Fail(ErrorCode::kInvalidArgument,
           spec.Name() + " is fitted per categorical group");
    case OperatorKind::kStandardize:
      st.center = s.mean;
      st.scale = SafeSpread(s.std);
      break;
    case OperatorKind::kMinMax:
      st.center = s.min;
      st.scale = SafeSpread(s.max - s.min);
      break;
    case OperatorKind::kRobust:
      st.center = s.median;
      st.scale = SafeSpread(s.q3 - s.q1);
      break;
    case OperatorKind::kMaxAbs:
      st.center = 0;
      st.scale = SafeSpread(s.max_abs);
      break;
    case OperatorKind::kZScore: {
      const double sd = SafeSpread(s.std);
      st.lo = s.mean - spec.param * sd;
      st.hi = s.mean + spec.param * sd;
      break;
    }
    case OperatorKind::kMad: {
      const double mad = SafeSpread(s.mad);
      st.lo = s.median - spec.param * mad;
      st.hi = s.median + spec.param * mad;
      break;
    }
    case OperatorKind::kIqr: {
      const double iqr = SafeSpread(s.q3 - s.q1);
      st.lo = s.q1 - spec.param * iqr;
      st.hi = s.q3 + spec.param * iqr;
      break;
    }
    case OperatorKind::kUniformBins: {
      const auto n = static_cast<int>(spec.param);
      const double range = SafeSpread(s.max - s.min);
      for (int i = 1; i < n; ++i) st.edges.push_back(s.min + range * i / n);
      break;
    }
    case OperatorKind::kQuantileBins: {
      const auto n = static_cast<int>(spec.param);
      for (int i = 1; i < n; ++i) {
        const double e = Quantile(s.sorted, static_cast<double>(i) / n);
        if (st.edges.empty() || e > st.edges.back()) st.edges.push_back(e);
      }
      break;
    }
  }
  return FittedOperator(spec, std::move(st), count);
}

FittedOperator FittedOperator::ConstantFill(const OperatorSpec& spec,
                                            double fill, size_t fit_count) {
  Check(spec.IsImputer(), ErrorCode::kInvalidArgument,
        "constant fill requires an imputer");
  OperatorStats st;
  st.fill = fill;
  return FittedOperator(spec, std::move(st), fit_count);
}

FittedOperator FittedOperator::FromStats(const OperatorSpec& spec,
                                         OperatorStats stats,
                                         size_t fit_count) {
  return FittedOperator(spec, std::move(stats), fit_count);
}

double FittedOperator::Transform(double x) const {
  if (std::isnan(x)) {
    if (!spec_.IsImputer()) {
      Fail(ErrorCode::kDataError,
           "missing value reached non-imputer " + spec_.Name());
    }
    return stats_.fill;
  }
  switch (spec_.kind) {
    case OperatorKind::kIdentity:
    case OperatorKind::kMeanImpute:
    case OperatorKind::kMedianImpute:
    case OperatorKind::kModeImpute:
    case OperatorKind::kMostFrequentImpute:
    case OperatorKind::kDummyImpute:
      return x;
    case OperatorKind::kStandardize:
    case OperatorKind::kMinMax:
    case OperatorKind::kRobust:
    case OperatorKind::kMaxAbs:
      return (x - stats_.center) / stats_.scale;
    case OperatorKind::kZScore:
    case OperatorKind::kMad:
    case OperatorKind::kIqr:
      return std::clamp(x, stats_.lo, stats_.hi);
    case OperatorKind::kUniformBins:
    case OperatorKind::kQuantileBins:
      return static_cast<double>(
          std::upper_bound(stats_.edges.begin(), stats_.edges.end(), x) -
          stats_.edges.begin());
  }
  return x;
}

double FittedOperator::NumDerivative(double x, double eps) const {
  Check(eps > 0, ErrorCode::kInvalidArgument, "derivative step must be > 0");
  if (std::isnan(x)) {
    if (!spec_.IsImputer()) {
      Fail(ErrorCode::kDataError,
           "missing value reached non-imputer " + spec_.Name());
    }
    return 0.0;
  }
  // Pass-through maps have an exact unit slope.
  if (spec_.IsIdentity() || spec_.IsImputer()) return 1.0;
  return (Transform(x + eps) - Transform(x - eps)) / (2 * eps);
}

namespace {

template <typename F>
void MapTransform(std::span<const double> x, std::span<double> out, double fill,
                  F f) {
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = std::isnan(x[i]) ? fill : f(x[i]);
  }
}

template <typename F>
void MapDerivative(std::span<const double> x, std::span<double> out, F f) {
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (std::isnan(v)) {
      out[i] = 0.0;
      continue;
    }
    const double eps = FittedOperator::DefaultStep(v);
    out[i] = (f(v + eps) - f(v - eps)) / (2 * eps);
  }
}

// Dispatches once per column on the operator kind; `body` receives a scalar
// map equal to Transform on observed values.
template <typename Body>
void WithScalarMap(const OperatorSpec& spec, const OperatorStats& st,
                   Body body) {
  switch (spec.kind) {
    case OperatorKind::kStandardize:
    case OperatorKind::kMinMax:
    case OperatorKind::kRobust:
    case OperatorKind::kMaxAbs: {
      const double c = st.center, s = st.scale;
      body([c, s](double v) { return (v - c) / s; });
      return;
    }
    case OperatorKind::kZScore:
    case OperatorKind::kMad:
    case OperatorKind::kIqr: {
      const double lo = st.lo, hi = st.hi;
      body([lo, hi](double v) { return std::clamp(v, lo, hi); });
      return;
    }
    case OperatorKind::kUniformBins:
    case OperatorKind::kQuantileBins: {
      const auto& e = st.edges;
      body([&e](double v) {
        return static_cast<double>(std::upper_bound(e.begin(), e.end(), v) -
                                   e.begin());
      });
      return;
    }
    default:
      body([](double v) { return v; });
      return;
  }
}

}  // namespace

void FittedOperator::TransformBatch(std::span<const double> x,
                                    std::span<double> out) const {
  Check(x.size() == out.size(), ErrorCode::kInvalidArgument,
        "batch size mismatch");
  if (!spec_.IsImputer()) {
    for (const double v : x) {
      if (std::isnan(v)) {
        Fail(ErrorCode::kDataError,
             "missing value reached non-imputer " + spec_.Name());
      }
    }
  }
  WithScalarMap(spec_, stats_,
                [&](auto f) { MapTransform(x, out, stats_.fill, f); });
}

void FittedOperator::DerivativeBatch(std::span<const double> x,
                                     std::span<double> out) const {
  Check(x.size() == out.size(), ErrorCode::kInvalidArgument,
        "batch size mismatch");
  if (!spec_.IsImputer()) {
    for (const double v : x) {
      if (std::isnan(v)) {
        Fail(ErrorCode::kDataError,
             "missing value reached non-imputer " + spec_.Name());
      }
    }
  }
  if (spec_.IsIdentity() || spec_.IsImputer()) {
    for (size_t i = 0; i < x.size(); ++i) out[i] = std::isnan(x[i]) ? 0.0 : 1.0;
    return;
  }
  WithScalarMap(spec_, stats_, [&](auto f) { MapDerivative(x, out, f); });
}

double FittedOperator::DefaultStep(double x) {
  return 1e-3 * std::max(1.0, std::abs(x));
}

}  // namespace prepsearch
