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


#ifndef PREPSEARCH_SYNTH_H_
#define PREPSEARCH_SYNTH_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "prepsearch/data_ingest.h"

namespace prepsearch {

struct SynthSpec {
  size_t n = 2000;
  size_t d = 10;
  int classes = 2;
  double separation = 1.0;     // class means ~ separation * N(0, I)
  std::vector<double> scales;  // per feature; empty or shorter = 1
  std::vector<double> offsets;  // per feature; empty or shorter = 0
  double missing_rate = 0;
  double outlier_rate = 0;
  double outlier_magnitude = 5;  // in column standard deviations
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static SynthSpec FromJson(const nlohmann::json& doc);
};

struct SynthData {
  RawTable corrupted;  // numeric columns f0..f{d-1}, target "label"
  FeatureMatrix clean;
  // Cells set to missing (rows x d).
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  // Cells that received an outlier shift.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> outliers;
};

// Gaussian class blobs, then per-feature scale and offset, then MCAR
// masking, then outlier shifts of +-magnitude * column std on observed cells.
SynthData Generate(const SynthSpec& spec);

// RMSE over the masked cells only.
double ImputationRmse(
    const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& clean,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);

}  // namespace prepsearch

#endif  // PREPSEARCH_SYNTH_H_
