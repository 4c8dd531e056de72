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

#include "prepsearch/synth.h"

#include <cmath>
#include <limits>
#include <random>

#include "prepsearch/error.h"
#include "prepsearch/random.h"

namespace prepsearch {
namespace {

double At(const std::vector<double>& v, size_t i, double fallback) {
  return i < v.size() ? v[i] : fallback;
}

}  // namespace

void SynthSpec::Validate() const {
  Check(d >= 1, ErrorCode::kInvalidArgument, "synth needs d >= 1");
  Check(n >= 10 * d, ErrorCode::kInvalidArgument, "synth needs n >= 10 * d");
  Check(classes >= 2, ErrorCode::kInvalidArgument, "synth needs >= 2 classes");
  Check(missing_rate >= 0 && missing_rate < 1, ErrorCode::kInvalidArgument,
        "missing_rate must be in [0, 1)");
  Check(outlier_rate >= 0 && outlier_rate < 1, ErrorCode::kInvalidArgument,
        "outlier_rate must be in [0, 1)");
  Check(std::isfinite(separation) && std::isfinite(outlier_magnitude),
        ErrorCode::kInvalidArgument, "synth parameters must be finite");
  Check(scales.size() <= d && offsets.size() <= d, ErrorCode::kInvalidArgument,
        "more scales/offsets than features");
}

nlohmann::json SynthSpec::ToJson() const {
  return {{"n", n},
          {"d", d},
          {"classes", classes},
          {"separation", separation},
          {"scales", scales},
          {"offsets", offsets},
          {"missing_rate", missing_rate},
          {"outlier_rate", outlier_rate},
          {"outlier_magnitude", outlier_magnitude},
          {"seed", seed}};
}

SynthSpec SynthSpec::FromJson(const nlohmann::json& doc) {
  Check(doc.is_object(), ErrorCode::kInvalidArgument,
        "synth spec must be an object");
  SynthSpec s;
  try {
    s.n = doc.value("n", s.n);
    s.d = doc.value("d", s.d);
    s.classes = doc.value("classes", s.classes);
    s.separation = doc.value("separation", s.separation);
    s.scales = doc.value("scales", s.scales);
    s.offsets = doc.value("offsets", s.offsets);
    s.missing_rate = doc.value("missing_rate", s.missing_rate);
    s.outlier_rate = doc.value("outlier_rate", s.outlier_rate);
    s.outlier_magnitude = doc.value("outlier_magnitude", s.outlier_magnitude);
    s.seed = doc.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("bad synth spec: ") + e.what());
  }
  s.Validate();
  return s;
}

SynthData Generate(const SynthSpec& spec) {
  spec.Validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);
  Rng means_rng = MakeRng(spec.seed, "synth/means");
  Rng rows_rng = MakeRng(spec.seed, "synth/rows");
  Rng mask_rng = MakeRng(spec.seed, "synth/missing");
  Rng outlier_rng = MakeRng(spec.seed, "synth/outliers");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> label_dist(0, spec.classes - 1);

  Eigen::MatrixXd means(spec.classes, d);
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      means(k, j) = spec.separation * normal(means_rng);
    }
  }

  SynthData out;
  FeatureMatrix& clean = out.clean;
  clean.data.resize(n, d);
  clean.missing = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
      n, d, false);
  clean.labels.resize(spec.n);
  clean.num_classes = spec.classes;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = label_dist(rows_rng);
    clean.labels[static_cast<size_t>(r)] = y;
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto jj = static_cast<size_t>(j);
      clean.data(r, j) = (means(y, j) + normal(rows_rng)) * At(spec.scales, jj, 1.0) +
                         At(spec.offsets, jj, 0.0);
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    clean.meta.push_back({"f" + std::to_string(j), -1, "", false});
  }

  Eigen::MatrixXd corrupted = clean.data;
  out.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, d, false);
  out.outliers = out.mask;
  if (spec.missing_rate > 0) {
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index r = 0; r < n; ++r) {
        if (unit(mask_rng) < spec.missing_rate) {
          out.mask(r, j) = true;
          corrupted(r, j) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }
  if (spec.outlier_rate > 0) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto col = clean.data.col(j);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      for (Eigen::Index r = 0; r < n; ++r) {
        const bool hit = unit(outlier_rng) < spec.outlier_rate;
        const double sign = unit(outlier_rng) < 0.5 ? -1.0 : 1.0;
        if (hit && !out.mask(r, j)) {
          out.outliers(r, j) = true;
          corrupted(r, j) += sign * spec.outlier_magnitude * sd;
        }
      }
    }
  }

  RawTable& table = out.corrupted;
  table.target_name = "label";
  for (Eigen::Index j = 0; j < d; ++j) {
    Column c;
    c.name = "f" + std::to_string(j);
    c.kind = ColumnKind::kNumeric;
    c.numbers.assign(corrupted.col(j).begin(), corrupted.col(j).end());
    table.columns.push_back(std::move(c));
  }
  for (const int y : clean.labels) table.target.push_back(std::to_string(y));
  return out;
}

double ImputationRmse(
    const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& clean,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
  Check(imputed.rows() == clean.rows() && imputed.cols() == clean.cols() &&
            mask.rows() == clean.rows() && mask.cols() == clean.cols(),
        ErrorCode::kInvalidArgument, "shape mismatch");
  double sum = 0;
  size_t count = 0;
  for (Eigen::Index j = 0; j < clean.cols(); ++j) {
    for (Eigen::Index r = 0; r < clean.rows(); ++r) {
      if (!mask(r, j)) continue;
      const double e = imputed(r, j) - clean(r, j);
      sum += e * e;
      ++count;
    }
  }
  Check(count > 0, ErrorCode::kInvalidArgument, "empty mask");
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace prepsearch
