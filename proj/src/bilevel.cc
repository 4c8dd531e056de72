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

#include "prepsearch/bilevel.h"

#include <chrono>
#include <cmath>
#include <numeric>

#include "prepsearch/error.h"

namespace prepsearch {
namespace {

using Eigen::VectorXd;
using nlohmann::json;

bool AllFinite(const VectorXd& v) { return v.allFinite(); }

bool AllFinite(const PipelineParams& p) {
  for (const auto& m : p.tau) {
    if (!m.allFinite()) return false;
  }
  for (const auto& m : p.psi) {
    if (!m.allFinite()) return false;
  }
  return true;
}

const char* ModeName(PrototypeMode mode) {
  return mode == PrototypeMode::kFix ? "fix" : "flex";
}

PrototypeMode ParseMode(const std::string& s) {
  if (s == "fix") return PrototypeMode::kFix;
  if (s == "flex") return PrototypeMode::kFlex;
  Fail(ErrorCode::kInvalidArgument, "unknown search mode '" + s + "'");
}

const char* ObjectiveName(Objective o) {
  return o == Objective::kBilevel ? "bilevel" : "train-only";
}

Objective ParseObjective(const std::string& s) {
  if (s == "bilevel") return Objective::kBilevel;
  if (s == "train-only") return Objective::kTrainOnly;
  Fail(ErrorCode::kInvalidArgument, "unknown objective '" + s + "'");
}

template <typename T>
void Read(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidArgument,
         std::string("bad value for '") + key + "': " + e.what());
  }
}

double Ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(Eigen::Index size, AdamOptions options)
    : options_(options), m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)) {}

void Adam::Step(VectorXd& x, const VectorXd& grad) {
  Check(grad.size() == m_.size() && x.size() == m_.size(),
        ErrorCode::kInvalidArgument, "Adam size mismatch");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  m_ = b1 * m_ + (1 - b1) * grad;
  v_ = b2 * v_ + (1 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] -= options_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.eps);
  }
}

// ---------------------------------------------------------------------------
// Config

void SearchConfig::Validate() const {
  Check(lr1 > 0 && std::isfinite(lr1), ErrorCode::kInvalidArgument,
        "lr1 must be > 0");
  Check(lr2 > 0 && std::isfinite(lr2), ErrorCode::kInvalidArgument,
        "lr2 must be > 0");
  Check(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be >= 1");
  Check(batch_size >= 1, ErrorCode::kInvalidArgument,
        "batch_size must be >= 1");
  Check(eps_scale > 0, ErrorCode::kInvalidArgument, "eps_scale must be > 0");
  Check(init_noise >= 0, ErrorCode::kInvalidArgument,
        "init_noise must be >= 0");
  Check(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 &&
            adam.beta2 < 1 && adam.eps > 0,
        ErrorCode::kInvalidArgument, "bad Adam hyperparameters");
  Check(sinkhorn.tol > 0 && sinkhorn.max_iters >= 1,
        ErrorCode::kInvalidArgument, "bad Sinkhorn options");
  Check(model == ModelKind::kLogistic || hidden >= 1,
        ErrorCode::kInvalidArgument, "hidden must be >= 1");
  if (mode == PrototypeMode::kFix) {
    Check(!prototype.empty(), ErrorCode::kInvalidArgument,
          "fix mode needs a prototype");
  }
}

json SearchConfig::ToJson() const {
  json proto = json::array();
  for (TfType t : prototype) proto.push_back(TfTypeName(t));
  return {{"mode", ModeName(mode)},
          {"objective", ObjectiveName(objective)},
          {"feature_wise", feature_wise},
          {"categorical_full_search", categorical_full_search},
          {"prototype", proto},
          {"catalog", catalog.ToJson()},
          {"model", ModelKindName(model)},
          {"hidden", hidden},
          {"lr1", lr1},
          {"lr2", lr2},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"eps_scale", eps_scale},
          {"init_noise", init_noise},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"sinkhorn", {{"tol", sinkhorn.tol}, {"max_iters", sinkhorn.max_iters}}},
          {"seed", seed}};
}

SearchConfig SearchConfig::FromJson(const json& doc, const SearchConfig& base) {
  Check(doc.is_object(), ErrorCode::kInvalidArgument,
        "search config must be an object");
  SearchConfig c = base;
  std::string s;
  if (doc.contains("mode")) {
    Read(doc, "mode", s);
    c.mode = ParseMode(s);
  }
  if (doc.contains("objective")) {
    Read(doc, "objective", s);
    c.objective = ParseObjective(s);
  }
  Read(doc, "feature_wise", c.feature_wise);
  Read(doc, "categorical_full_search", c.categorical_full_search);
  if (doc.contains("prototype")) {
    std::vector<std::string> names;
    Read(doc, "prototype", names);
    c.prototype.clear();
    for (const auto& n : names) c.prototype.push_back(ParseTfType(n));
  }
  if (doc.contains("catalog")) c.catalog = CatalogConfig::FromJson(doc["catalog"]);
  if (doc.contains("model")) {
    Read(doc, "model", s);
    c.model = ParseModelKind(s);
  }
  Read(doc, "hidden", c.hidden);
  Read(doc, "lr1", c.lr1);
  Read(doc, "lr2", c.lr2);
  Read(doc, "epochs", c.epochs);
  Read(doc, "batch_size", c.batch_size);
  Read(doc, "eps_scale", c.eps_scale);
  Read(doc, "init_noise", c.init_noise);
  if (doc.contains("adam")) {
    const json& a = doc["adam"];
    Read(a, "beta1", c.adam.beta1);
    Read(a, "beta2", c.adam.beta2);
    Read(a, "eps", c.adam.eps);
  }
  if (doc.contains("sinkhorn")) {
    const json& k = doc["sinkhorn"];
    Read(k, "tol", c.sinkhorn.tol);
    Read(k, "max_iters", c.sinkhorn.max_iters);
  }
  Read(doc, "seed", c.seed);
  c.Validate();
  return c;
}

SearchConfig SearchConfig::FromJson(const json& doc) {
  return FromJson(doc, SearchConfig{});
}

json PassCounts::ToJson() const {
  return {{"iterations", iterations},
          {"fit", fit},
          {"forward", forward},
          {"backward", backward},
          {"d3_skipped", d3_skipped}};
}

// ---------------------------------------------------------------------------
// Hypergradient

VectorXd VirtualStep(const VectorXd& w, const VectorXd& grad, double lr2) {
  Check(w.size() == grad.size(), ErrorCode::kInvalidArgument,
        "gradient size mismatch");
  return w - lr2 * grad;
}

Hypergradient ComputeHypergradient(BilevelProblem& problem, const VectorXd& w,
                                   double lr2, double eps_scale) {
  Hypergradient h;
  h.train_grad_w = problem.TrainGradW(w);
  h.w_next = VirtualStep(w, h.train_grad_w, lr2);
  BilevelProblem::ValGrads val = problem.ValGrad(h.w_next);
  h.val_loss = val.loss;
  h.d2 = std::move(val.dbeta);
  const double norm = val.dw.norm();
  if (norm == 0.0 || !std::isfinite(norm)) {
    h.d3 = VectorXd::Zero(h.d2.size());
    h.d3_skipped = true;
  } else {
    const double eps = eps_scale / norm;
    const VectorXd plus = problem.TrainGradBeta(w + eps * val.dw);
    const VectorXd minus = problem.TrainGradBeta(w - eps * val.dw);
    h.d3 = (plus - minus) / (2 * eps);
  }
  h.total = h.d2 - lr2 * h.d3;
  return h;
}

PipelineProblem::PipelineProblem(const PipelineLayout& layout,
                                 const RelaxedParams& relaxed,
                                 const FittedPipeline& fitted,
                                 const ModelShape& shape,
                                 const FeatureMatrix& train,
                                 const FeatureMatrix& val, PassCounts* counts)
    : layout_(layout),
      relaxed_(relaxed),
      fitted_(fitted),
      shape_(shape),
      train_(Forward(layout, relaxed, fitted, train.data)),
      val_(Forward(layout, relaxed, fitted, val.data)),
      train_labels_(train.labels),
      val_labels_(val.labels),
      counts_(counts) {}

BilevelProblem::ValGrads PipelineProblem::Joint(const PipelineForward& fwd,
                                                const std::vector<int>& labels,
                                                const VectorXd& w) {
  const ModelGrads g = prepsearch::Backward(shape_, w, fwd.output, labels, true);
  const PipelineBackward pb =
      prepsearch::Backward(layout_, relaxed_, fitted_, fwd.tape, g.dx);
  if (counts_ != nullptr) {
    ++counts_->forward;
    ++counts_->backward;
  }
  return {g.loss, g.dw, pb.grads.Pack()};
}

VectorXd PipelineProblem::TrainGradW(const VectorXd& w) {
  ModelGrads g =
      prepsearch::Backward(shape_, w, train_.output, train_labels_, false);
  Check(std::isfinite(g.loss), ErrorCode::kDivergence,
        "non-finite training loss");
  if (counts_ != nullptr) {
    ++counts_->forward;
    ++counts_->backward;
  }
  return std::move(g.dw);
}

BilevelProblem::ValGrads PipelineProblem::ValGrad(const VectorXd& w) {
  return Joint(val_, val_labels_, w);
}

VectorXd PipelineProblem::TrainGradBeta(const VectorXd& w) {
  return Joint(train_, train_labels_, w).dbeta;
}

BilevelProblem::ValGrads PipelineProblem::TrainGradJoint(const VectorXd& w) {
  return Joint(train_, train_labels_, w);
}

double PipelineProblem::TrainLoss(const VectorXd& w) const {
  return ForwardLoss(shape_, w, train_.output, train_labels_).loss;
}

double PipelineProblem::ValLoss(const VectorXd& w) const {
  return ForwardLoss(shape_, w, val_.output, val_labels_).loss;
}

// ---------------------------------------------------------------------------
// Search

std::vector<EvalResult> Evaluator::Run(
    const PipelineParams& params, const VectorXd& w,
    const std::vector<const FeatureMatrix*>& splits,
    const SinkhornOptions& sinkhorn) const {
  const RelaxedParams relaxed = Relax(layout, params, sinkhorn);
  const FittedPipeline fitted = FitStagewise(layout, relaxed, train);
  std::vector<EvalResult> out;
  for (const FeatureMatrix* split : splits) {
    const Eigen::MatrixXd x = Apply(layout, relaxed, fitted, split->data);
    EvalResult r;
    r.loss = ForwardLoss(shape, w, x, split->labels).loss;
    r.accuracy = Accuracy(shape, w, x, split->labels);
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<size_t>> EpochBatches(size_t rows, size_t batch_size,
                                              Rng& rng) {
  Check(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::vector<size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), size_t{0});
  Shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<size_t>> batches;
  for (size_t start = 0; start < rows; start += batch_size) {
    const size_t end = std::min(rows, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

PipelineLayout MakeLayout(const SearchConfig& config,
                          const FeatureMatrix& train) {
  config.Validate();
  LayoutOptions options;
  options.mode = config.mode;
  options.prototype = config.prototype;
  options.feature_wise = config.feature_wise;
  options.categorical_full_search = config.categorical_full_search;
  return PipelineLayout::Build(BuildCatalog(config.catalog), train, options);
}

ModelShape MakeShape(const SearchConfig& config, const FeatureMatrix& train) {
  ModelShape s{config.model, train.cols(), train.num_classes, config.hidden};
  s.Validate();
  return s;
}

PipelineParams InitParams(const SearchConfig& config,
                          const PipelineLayout& layout) {
  Rng rng = MakeRng(config.seed, "init/pipeline");
  return PipelineParams::Init(layout, config.init_noise, rng);
}

VectorXd InitModel(const SearchConfig& config, const ModelShape& shape) {
  Rng rng = MakeRng(config.seed, "init/model");
  return InitWeights(shape, rng);
}

AdamOptions WithLr(AdamOptions a, double lr) {
  a.lr = lr;
  return a;
}

}  // namespace

Search::Search(SearchConfig config, const FeatureMatrix& train,
               const FeatureMatrix& val, const FeatureMatrix& test)
    : config_(std::move(config)),
      train_(train),
      val_(val),
      test_(test),
      layout_(MakeLayout(config_, train)),
      shape_(MakeShape(config_, train)),
      params_(InitParams(config_, layout_)),
      w_(InitModel(config_, shape_)),
      adam_(params_.Size(), WithLr(config_.adam, config_.lr1)) {
  Check(train.rows() > 0 && val.rows() > 0 && test.rows() > 0,
        ErrorCode::kInvalidArgument, "every split needs at least one row");
  Check(val.cols() == train.cols() && test.cols() == train.cols(),
        ErrorCode::kInvalidArgument, "split column counts differ");
}

void Search::Iterate(const FeatureMatrix& train_batch,
                     const FeatureMatrix& val_batch) {
  const RelaxedParams relaxed = Relax(layout_, params_, config_.sinkhorn);
  const FittedPipeline fitted = FitStagewise(layout_, relaxed, train_batch);
  ++passes_.fit;
  ++passes_.iterations;
  PipelineProblem problem(layout_, relaxed, fitted, shape_, train_batch,
                          val_batch, &passes_);
  WeightGrads grads = WeightGrads::Zeros(layout_);
  VectorXd w_next;
  if (config_.objective == Objective::kBilevel) {
    Hypergradient h = ComputeHypergradient(problem, w_, config_.lr2,
                                           config_.eps_scale);
    if (h.d3_skipped) ++passes_.d3_skipped;
    Check(std::isfinite(h.val_loss), ErrorCode::kDivergence,
          "non-finite validation loss at epoch " + std::to_string(epoch_));
    grads.Unpack(h.total);
    w_next = std::move(h.w_next);
  } else {
    BilevelProblem::ValGrads g = problem.TrainGradJoint(w_);
    Check(std::isfinite(g.loss), ErrorCode::kDivergence,
          "non-finite training loss at epoch " + std::to_string(epoch_));
    grads.Unpack(g.dbeta);
    w_next = VirtualStep(w_, g.dw, config_.lr2);
  }
  VectorXd flat = params_.Pack();
  adam_.Step(flat, ChainToParams(layout_, relaxed, grads).Pack());
  params_.Unpack(flat);
  w_ = std::move(w_next);
  Check(AllFinite(params_) && AllFinite(w_), ErrorCode::kDivergence,
        "non-finite parameters at epoch " + std::to_string(epoch_));
}

SearchResult Search::Run(const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  Rng batch_rng = MakeRng(config_.seed, "batch");
  Rng val_rng = MakeRng(config_.seed, "val-batch");
  const auto batch = static_cast<size_t>(config_.batch_size);
  const auto n_val = static_cast<size_t>(val_.rows());
  const Evaluator eval{layout_, shape_, train_};

  SearchResult result;
  bool have_best = false;
  for (epoch_ = 1; epoch_ <= config_.epochs; ++epoch_) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const auto batches =
        EpochBatches(static_cast<size_t>(train_.rows()), batch, batch_rng);
    std::vector<size_t> val_perm(n_val);
    std::iota(val_perm.begin(), val_perm.end(), size_t{0});
    Shuffle(val_perm.begin(), val_perm.end(), val_rng);
    size_t cursor = 0;
    std::vector<size_t> val_rows;
    for (const auto& rows : batches) {
      val_rows.clear();
      for (size_t j = 0; j < std::min(batch, n_val); ++j) {
        val_rows.push_back(val_perm[cursor]);
        cursor = (cursor + 1) % n_val;
      }
      Iterate(train_.SelectRows(rows), val_.SelectRows(val_rows));
    }
    const auto ev = eval.Run(params_, w_, {&train_, &val_}, config_.sinkhorn);
    Check(std::isfinite(ev[0].loss) && std::isfinite(ev[1].loss),
          ErrorCode::kDivergence,
          "non-finite loss at epoch " + std::to_string(epoch_));
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.train_loss = ev[0].loss;
    rec.val_loss = ev[1].loss;
    rec.val_accuracy = ev[1].accuracy;
    rec.passes = passes_;
    rec.wall_ms = Ms(epoch_start);
    result.epochs.push_back(rec);
    if (!have_best || rec.val_loss < result.best_val_loss) {
      have_best = true;
      result.best_epoch = epoch_;
      result.best_val_loss = rec.val_loss;
      result.best_val_accuracy = rec.val_accuracy;
      result.best_params = params_;
      result.best_w = w_;
    }
    if (on_epoch) on_epoch(rec);
  }
  const auto test = eval.Run(result.best_params, result.best_w, {&test_},
                             config_.sinkhorn);
  result.test_loss = test[0].loss;
  result.test_accuracy = test[0].accuracy;
  result.passes = passes_;
  result.wall_ms = Ms(start);
  return result;
}

SearchResult RunSearch(const SearchConfig& config, const FeatureMatrix& train,
                       const FeatureMatrix& val, const FeatureMatrix& test,
                       const EpochCallback& on_epoch) {
  Search search(config, train, val, test);
  return search.Run(on_epoch);
}

}  // namespace prepsearch
