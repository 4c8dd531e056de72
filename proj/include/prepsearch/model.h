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


#ifndef PREPSEARCH_MODEL_H_
#define PREPSEARCH_MODEL_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prepsearch/random.h"

namespace prepsearch {

enum class ModelKind { kLogistic, kMlp };

const char* ModelKindName(ModelKind kind);
ModelKind ParseModelKind(const std::string& name);  // "logreg" | "mlp"

// Weights live in one flat vector. Logistic: W (K x c, column-major), b (K).
// MLP: W1 (h x c), b1 (h), W2 (K x h), b2 (K), ReLU between.
struct ModelShape {
  ModelKind kind = ModelKind::kLogistic;
  Eigen::Index inputs = 0;
  Eigen::Index classes = 2;
  Eigen::Index hidden = 100;

  Eigen::Index ParamCount() const;
  void Validate() const;
};

// Logistic: zeros. MLP: uniform in +-sqrt(6 / (fan_in + fan_out)), biases 0.
Eigen::VectorXd InitWeights(const ModelShape& shape, Rng& rng);

struct BatchLoss {
  double loss = 0;        // mean cross-entropy
  Eigen::MatrixXd probs;  // rows x K
};

struct ModelGrads {
  double loss = 0;
  Eigen::VectorXd dw;
  Eigen::MatrixXd dx;  // empty unless requested
};

BatchLoss ForwardLoss(const ModelShape& shape, const Eigen::VectorXd& w,
                      const Eigen::MatrixXd& x, std::span<const int> y);
ModelGrads Backward(const ModelShape& shape, const Eigen::VectorXd& w,
                    const Eigen::MatrixXd& x, std::span<const int> y,
                    bool want_dx = true);
// Argmax class (ties to the lowest index) against the labels.
double Accuracy(const ModelShape& shape, const Eigen::VectorXd& w,
                const Eigen::MatrixXd& x, std::span<const int> y);
Eigen::MatrixXd Logits(const ModelShape& shape, const Eigen::VectorXd& w,
                       const Eigen::MatrixXd& x);

}  // namespace prepsearch

#endif  // PREPSEARCH_MODEL_H_
