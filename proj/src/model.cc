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

#include "prepsearch/model.h"

#include <cmath>

#include "prepsearch/error.h"

namespace prepsearch {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using ConstVec = Eigen::Map<const VectorXd>;

struct Views {
  ConstMap w1;
  ConstVec b1;
  ConstMap w2;  // MLP only
  ConstVec b2;
};

Views Split(const ModelShape& s, const VectorXd& w) {
  const double* p = w.data();
  if (s.kind == ModelKind::kLogistic) {
    return {ConstMap(p, s.classes, s.inputs),
            ConstVec(p + s.classes * s.inputs, s.classes), ConstMap(nullptr, 0, 0),
            ConstVec(nullptr, 0)};
  }
  const Index h = s.hidden;
  const Index off_b1 = h * s.inputs;
  const Index off_w2 = off_b1 + h;
  const Index off_b2 = off_w2 + s.classes * h;
  return {ConstMap(p, h, s.inputs), ConstVec(p + off_b1, h),
          ConstMap(p + off_w2, s.classes, h), ConstVec(p + off_b2, s.classes)};
}

void CheckInputs(const ModelShape& s, const VectorXd& w, const MatrixXd& x,
                 std::span<const int> y) {
  Check(w.size() == s.ParamCount(), ErrorCode::kInvalidArgument,
        "weight vector has the wrong size");
  Check(x.cols() == s.inputs, ErrorCode::kInvalidArgument,
        "feature count does not match the model");
  Check(static_cast<Index>(y.size()) == x.rows(), ErrorCode::kInvalidArgument,
        "label count does not match the batch");
  Check(x.rows() > 0, ErrorCode::kInvalidArgument, "empty batch");
  for (const int label : y) {
    if (label < 0 || label >= s.classes) {
      Fail(ErrorCode::kInvalidArgument,
           "label " + std::to_string(label) + " out of range");
    }
  }
}

struct Activations {
  MatrixXd pre;     // MLP hidden pre-activation
  MatrixXd hidden;  // MLP ReLU output
  MatrixXd logits;
};

Activations Run(const ModelShape& s, const Views& v, const MatrixXd& x) {
  Activations a;
  if (s.kind == ModelKind::kLogistic) {
    a.logits = x * v.w1.transpose();
    a.logits.rowwise() += v.b1.transpose();
    return a;
  }
  a.pre = x * v.w1.transpose();
  a.pre.rowwise() += v.b1.transpose();
  a.hidden = a.pre.cwiseMax(0.0);
  a.logits = a.hidden * v.w2.transpose();
  a.logits.rowwise() += v.b2.transpose();
  return a;
}

// Stable softmax per row; returns the mean cross-entropy.
double Softmax(const MatrixXd& logits, std::span<const int> y, MatrixXd& probs) {
  probs.resize(logits.rows(), logits.cols());
  double total = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0;
    for (Index k = 0; k < logits.cols(); ++k) {
      const double e = std::exp(logits(r, k) - m);
      probs(r, k) = e;
      sum += e;
    }
    probs.row(r) /= sum;
    total += std::log(sum) + m - logits(r, y[static_cast<size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

const char* ModelKindName(ModelKind kind) {
  return kind == ModelKind::kLogistic ? "logreg" : "mlp";
}

ModelKind ParseModelKind(const std::string& name) {
  if (name == "logreg" || name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp") return ModelKind::kMlp;
  Fail(ErrorCode::kInvalidArgument, "unknown model '" + name + "'");
}

Index ModelShape::ParamCount() const {
  if (kind == ModelKind::kLogistic) return classes * inputs + classes;
  return hidden * inputs + hidden + classes * hidden + classes;
}

void ModelShape::Validate() const {
  Check(inputs > 0, ErrorCode::kInvalidArgument, "model needs >= 1 input");
  Check(classes >= 2, ErrorCode::kInvalidArgument, "model needs >= 2 classes");
  Check(kind == ModelKind::kLogistic || hidden > 0,
        ErrorCode::kInvalidArgument, "MLP needs >= 1 hidden unit");
}

VectorXd InitWeights(const ModelShape& shape, Rng& rng) {
  shape.Validate();
  VectorXd w = VectorXd::Zero(shape.ParamCount());
  if (shape.kind == ModelKind::kLogistic) return w;
  const Index h = shape.hidden;
  const double a1 = std::sqrt(6.0 / static_cast<double>(shape.inputs + h));
  const double a2 = std::sqrt(6.0 / static_cast<double>(h + shape.classes));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  const Index off_w2 = h * shape.inputs + h;
  for (Index i = 0; i < h * shape.inputs; ++i) w[i] = u1(rng);
  for (Index i = 0; i < shape.classes * h; ++i) w[off_w2 + i] = u2(rng);
  return w;
}

MatrixXd Logits(const ModelShape& shape, const VectorXd& w, const MatrixXd& x) {
  Check(w.size() == shape.ParamCount() && x.cols() == shape.inputs,
        ErrorCode::kInvalidArgument, "model/input shape mismatch");
  return Run(shape, Split(shape, w), x).logits;
}

BatchLoss ForwardLoss(const ModelShape& shape, const VectorXd& w,
                      const MatrixXd& x, std::span<const int> y) {
  CheckInputs(shape, w, x, y);
  const Activations a = Run(shape, Split(shape, w), x);
  BatchLoss out;
  out.loss = Softmax(a.logits, y, out.probs);
  return out;
}

ModelGrads Backward(const ModelShape& shape, const VectorXd& w,
                    const MatrixXd& x, std::span<const int> y, bool want_dx) {
  CheckInputs(shape, w, x, y);
  const Views v = Split(shape, w);
  const Activations a = Run(shape, v, x);
  MatrixXd g;
  ModelGrads out;
  out.loss = Softmax(a.logits, y, g);
  for (Index r = 0; r < g.rows(); ++r) g(r, y[static_cast<size_t>(r)]) -= 1.0;
  g /= static_cast<double>(x.rows());

  out.dw.resize(shape.ParamCount());
  if (shape.kind == ModelKind::kLogistic) {
    const Index k = shape.classes;
    Eigen::Map<MatrixXd>(out.dw.data(), k, shape.inputs) = g.transpose() * x;
    out.dw.segment(k * shape.inputs, k) = g.colwise().sum().transpose();
    if (want_dx) out.dx = g * v.w1;
    return out;
  }
  const Index h = shape.hidden;
  const Index off_b1 = h * shape.inputs;
  const Index off_w2 = off_b1 + h;
  const Index off_b2 = off_w2 + shape.classes * h;
  Eigen::Map<MatrixXd>(out.dw.data() + off_w2, shape.classes, h) =
      g.transpose() * a.hidden;
  out.dw.segment(off_b2, shape.classes) = g.colwise().sum().transpose();
  MatrixXd dpre = g * v.w2;
  dpre = dpre.cwiseProduct((a.pre.array() > 0.0).cast<double>().matrix());
  Eigen::Map<MatrixXd>(out.dw.data(), h, shape.inputs) = dpre.transpose() * x;
  out.dw.segment(off_b1, h) = dpre.colwise().sum().transpose();
  if (want_dx) out.dx = dpre * v.w1;
  return out;
}

double Accuracy(const ModelShape& shape, const VectorXd& w, const MatrixXd& x,
                std::span<const int> y) {
  CheckInputs(shape, w, x, y);
  const MatrixXd logits = Run(shape, Split(shape, w), x).logits;
  size_t correct = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    for (Index k = 1; k < logits.cols(); ++k) {
      if (logits(r, k) > logits(r, best)) best = k;
    }
    if (best == y[static_cast<size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace prepsearch
