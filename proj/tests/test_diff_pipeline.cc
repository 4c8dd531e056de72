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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "prepsearch/data_ingest.h"
#include "prepsearch/diff_pipeline.h"
#include "prepsearch/error.h"

namespace prepsearch {
namespace {

const OperatorSpec kIdentity = OperatorSpec::Identity(TfType::kNormalize);

FittedOperator Affine(double center, double scale) {
  return FittedOperator::FromStats(OperatorSpec::Parse("minmax"),
                                   {center, scale, 0, 0, 0, {}});
}

FittedOperator Clip(double lo, double hi) {
  return FittedOperator::FromStats(OperatorSpec::Parse("zscore(2)"),
                                   {0, 1, lo, hi, 0, {}});
}

FittedOperator Doubler() { return Affine(0, 0.5); }

FittedOperator IdentityOp() {
  return FittedOperator::FromStats(kIdentity, {});
}

FeatureMatrix Numeric(const std::vector<std::vector<double>>& cols) {
  RawTable t;
  t.target_name = "y";
  for (size_t c = 0; c < cols.size(); ++c) {
    t.columns.push_back({"f" + std::to_string(c), ColumnKind::kNumeric,
                         cols[c], {}});
  }
  for (size_t r = 0; r < cols[0].size(); ++r) {
    t.target.push_back(std::to_string(r % 2));
  }
  return Encode(t, t, t).train;
}

// Random single-column pipeline of affine (and optionally clipping) terms,
// all of them type 0, plus a matching beta.
struct RandomPipeline {
  ColumnPipeline pipeline;
  Eigen::MatrixXd beta;
};

RandomPipeline MakeRandom(std::mt19937_64& rng, size_t stages, size_t ops,
                          bool clips) {
  std::uniform_real_distribution<double> u(-1, 1);
  RandomPipeline rp;
  rp.beta.resize(static_cast<Eigen::Index>(stages),
                 static_cast<Eigen::Index>(ops));
  for (size_t i = 0; i < stages; ++i) {
    std::vector<StageTerm> terms;
    double total = 0;
    for (size_t k = 0; k < ops; ++k) {
      FittedOperator op = k == 0 ? IdentityOp()
                          : clips && k % 2 == 0
                              ? Clip(-3 + u(rng), 3 + u(rng))
                              : Affine(u(rng), 1.5 + u(rng));
      terms.push_back({i, k, op});
      const double w = 0.1 + std::abs(u(rng));
      rp.beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w;
      total += w;
    }
    rp.beta.row(static_cast<Eigen::Index>(i)) /= total;
    rp.pipeline.stages.push_back(std::move(terms));
  }
  return rp;
}

// Direct nested mixture evaluation.
std::vector<double> Direct(const ColumnPipeline& p, const Eigen::MatrixXd& beta,
                           const Eigen::MatrixXd* alpha,
                           std::vector<double> x) {
  for (size_t i = 0; i < p.stages.size(); ++i) {
    std::vector<double> next(x.size(), 0.0);
    for (const StageTerm& t : p.stages[i]) {
      const double w = TermWeight(t, i, beta, alpha);
      for (size_t r = 0; r < x.size(); ++r) next[r] += w * t.fitted.Transform(x[r]);
    }
    x = std::move(next);
  }
  return x;
}

TEST(ForwardColumn, WorkedExamples) {
  ColumnPipeline p;
  p.stages.push_back({{0, 0, IdentityOp()}, {0, 1, Doubler()}});
  Eigen::MatrixXd beta(1, 2);
  beta << 0.5, 0.5;
  const std::vector<double> x0 = {3};
  EXPECT_EQ(ForwardColumn(p, beta, nullptr, x0).stages[0].result[0], 4.5);
  beta << 0, 1;
  EXPECT_EQ(ForwardColumn(p, beta, nullptr, x0).stages[0].result[0], 6.0);
}

TEST(BackwardColumn, WorkedExamples) {
  ColumnPipeline p;
  p.stages.push_back({{0, 0, IdentityOp()}, {0, 1, Doubler()}});
  Eigen::MatrixXd beta(1, 2);
  beta << 0.5, 0.5;
  const std::vector<double> x0 = {3};
  const ColumnTape tape = ForwardColumn(p, beta, nullptr, x0);
  Eigen::MatrixXd dbeta = Eigen::MatrixXd::Zero(1, 2);
  std::vector<double> dx0(1), dxs = {1};
  BackwardColumn(p, tape, beta, nullptr, dxs, dbeta, nullptr, dx0);
  EXPECT_EQ(dbeta(0, 0), 3.0);
  EXPECT_EQ(dbeta(0, 1), 6.0);
  EXPECT_NEAR(dx0[0], 1.5, 1e-9);

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 2);
  std::vector<double> zeros = {0};
  BackwardColumn(p, tape, beta, nullptr, zeros, zero, nullptr, dx0);
  EXPECT_EQ(zero.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(dx0[0], 0.0);
}

TEST(BackwardColumn, AllIdentityPassesGradientThrough) {
  ColumnPipeline p;
  for (size_t i = 0; i < 3; ++i) p.stages.push_back({{i, 0, IdentityOp()}});
  const Eigen::MatrixXd beta = Eigen::MatrixXd::Ones(3, 1);
  const std::vector<double> x0 = {-123.4, 0.0, 1e6};
  const ColumnTape tape = ForwardColumn(p, beta, nullptr, x0);
  EXPECT_EQ(tape.stages.back().result, x0);
  Eigen::MatrixXd dbeta = Eigen::MatrixXd::Zero(3, 1);
  const std::vector<double> dxs = {0.3, -7.0, 2.5e-3};
  std::vector<double> dx0(3);
  BackwardColumn(p, tape, beta, nullptr, dxs, dbeta, nullptr, dx0);
  EXPECT_EQ(dx0, dxs);
}

TEST(BackwardColumn, ShapeMismatch) {
  ColumnPipeline p;
  p.stages.push_back({{0, 0, IdentityOp()}});
  const Eigen::MatrixXd beta = Eigen::MatrixXd::Ones(1, 1);
  const std::vector<double> x0 = {1, 2};
  const ColumnTape tape = ForwardColumn(p, beta, nullptr, x0);
  Eigen::MatrixXd dbeta = Eigen::MatrixXd::Zero(1, 1);
  std::vector<double> dxs = {1}, dx0(2);
  EXPECT_THROW(
      BackwardColumn(p, tape, beta, nullptr, dxs, dbeta, nullptr, dx0), Error);
}

TEST(ForwardColumn, SnapshotFormEqualsDirectAndReplays) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0, 2);
  for (int rep = 0; rep < 100; ++rep) {
    const RandomPipeline rp = MakeRandom(rng, 1 + rep % 4, 2 + rep % 5, rep % 2);
    std::vector<double> x0(17);
    for (double& v : x0) v = g(rng);
    const ColumnTape tape = ForwardColumn(rp.pipeline, rp.beta, nullptr, x0);
    const std::vector<double> direct = Direct(rp.pipeline, rp.beta, nullptr, x0);
    for (size_t r = 0; r < x0.size(); ++r) {
      EXPECT_NEAR(tape.stages.back().result[r], direct[r], 1e-12);
    }
    for (const StageTape& st : tape.stages) {
      for (size_t r = 0; r < x0.size(); ++r) {
        double replay = 0;
        for (size_t j = 0; j < st.weights.size(); ++j) {
          replay += st.weights[j] * st.outputs[j][r];
        }
        EXPECT_NEAR(replay, st.result[r], 1e-12);
      }
    }
  }
}

TEST(ForwardColumn, OneHotRecoversSequentialApplication) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(0, 2);
  for (int rep = 0; rep < 50; ++rep) {
    RandomPipeline rp = MakeRandom(rng, 3, 4, true);
    std::vector<size_t> pick;
    rp.beta.setZero();
    for (Eigen::Index i = 0; i < 3; ++i) {
      pick.push_back(rng() % 4);
      rp.beta(i, static_cast<Eigen::Index>(pick.back())) = 1;
    }
    std::vector<double> x0(9);
    for (double& v : x0) v = g(rng);
    const ColumnTape tape = ForwardColumn(rp.pipeline, rp.beta, nullptr, x0);
    for (size_t r = 0; r < x0.size(); ++r) {
      double x = x0[r];
      for (size_t i = 0; i < 3; ++i) {
        x = rp.pipeline.stages[i][pick[i]].fitted.Transform(x);
      }
      EXPECT_EQ(tape.stages.back().result[r], x);
    }
  }
}

// Loss: sum_r c_r x_s + 0.5 x_s^2.
double Loss(const std::vector<double>& xs, const std::vector<double>& c) {
  double l = 0;
  for (size_t r = 0; r < xs.size(); ++r) l += c[r] * xs[r] + 0.5 * xs[r] * xs[r];
  return l;
}

void CheckGradients(bool clips, bool flex, double tol) {
  std::mt19937_64 rng(clips ? 23 : 24);
  std::normal_distribution<double> g(0, 1);
  for (int rep = 0; rep < 30; ++rep) {
    const size_t stages = 3, ops = 4;
    RandomPipeline rp = MakeRandom(rng, stages, ops, clips);
    Eigen::MatrixXd alpha;
    if (flex) {
      // Stage i holds type i; alpha weights scale every term of the stage.
      alpha = Eigen::MatrixXd::Zero(3, 3);
      for (Eigen::Index i = 0; i < 3; ++i) alpha(i, i) = 0.5 + 0.5 * std::abs(g(rng));
    }
    const Eigen::MatrixXd* ap = flex ? &alpha : nullptr;
    std::vector<double> x0(11), c(11);
    for (double& v : x0) v = g(rng);
    for (double& v : c) v = g(rng);
    auto forward = [&](const Eigen::MatrixXd& b, const Eigen::MatrixXd* a,
                       const std::vector<double>& x) {
      return ForwardColumn(rp.pipeline, b, a, x).stages.back().result;
    };
    const ColumnTape tape = ForwardColumn(rp.pipeline, rp.beta, ap, x0);
    std::vector<double> dxs(x0.size()), dx0(x0.size());
    for (size_t r = 0; r < x0.size(); ++r) dxs[r] = c[r] + tape.stages.back().result[r];
    Eigen::MatrixXd dbeta = Eigen::MatrixXd::Zero(rp.beta.rows(), rp.beta.cols());
    Eigen::MatrixXd dalpha = Eigen::MatrixXd::Zero(3, 3);
    BackwardColumn(rp.pipeline, tape, rp.beta, ap, dxs, dbeta,
                   flex ? &dalpha : nullptr, dx0);

    const double h = 1e-6;
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max(1.0, std::abs(b));
    };
    for (Eigen::Index k = 0; k < rp.beta.size(); ++k) {
      Eigen::MatrixXd bp = rp.beta, bm = rp.beta;
      bp(k) += h;
      bm(k) -= h;
      const double fd =
          (Loss(forward(bp, ap, x0), c) - Loss(forward(bm, ap, x0), c)) / (2 * h);
      EXPECT_LT(rel(dbeta(k), fd), tol);
    }
    if (flex) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        Eigen::MatrixXd p = alpha, m = alpha;
        p(i, i) += h;
        m(i, i) -= h;
        const double fd = (Loss(forward(rp.beta, &p, x0), c) -
                           Loss(forward(rp.beta, &m, x0), c)) / (2 * h);
        EXPECT_LT(rel(dalpha(i, i), fd), tol);
      }
    }
    for (size_t r = 0; r < x0.size(); ++r) {
      std::vector<double> p = x0, m = x0;
      p[r] += h;
      m[r] -= h;
      const double fd = (Loss(forward(rp.beta, ap, p), c) -
                         Loss(forward(rp.beta, ap, m), c)) / (2 * h);
      EXPECT_LT(rel(dx0[r], fd), tol);
    }
  }
}

TEST(BackwardColumn, GradientCheckAffine) { CheckGradients(false, false, 1e-4); }
TEST(BackwardColumn, GradientCheckAffineFlex) { CheckGradients(false, true, 1e-4); }
TEST(BackwardColumn, GradientCheckWithClipping) { CheckGradients(true, false, 1e-2); }

PipelineLayout FixLayout(const FeatureMatrix& schema, std::vector<TfType> proto,
                         CatalogConfig cfg = {}) {
  LayoutOptions o;
  o.prototype = std::move(proto);
  return PipelineLayout::Build(BuildCatalog(cfg), schema, o);
}

RelaxedParams Uniform(const PipelineLayout& l) {
  Rng rng(0);
  return Relax(l, PipelineParams::Init(l, 0, rng));
}

const StageTerm& Find(const std::vector<StageTerm>& terms, const std::string& name) {
  for (const StageTerm& t : terms) {
    if (t.fitted.spec().Name() == name) return t;
  }
  throw std::runtime_error("no term " + name);
}

TEST(FitStagewise, MixtureImputedColumnFeedsNextStage) {
  const FeatureMatrix batch = Numeric({{1, NAN, 3}});
  const PipelineLayout l =
      FixLayout(batch, {TfType::kMissingImpute, TfType::kNormalize});
  const FittedPipeline f = FitStagewise(l, Uniform(l), batch);
  const auto& s0 = f.columns[0].stages[0];
  EXPECT_EQ(Find(s0, "mean").fitted.stats().fill, 2.0);
  EXPECT_EQ(Find(s0, "median").fitted.stats().fill, 2.0);
  EXPECT_EQ(Find(s0, "mode").fitted.stats().fill, 1.0);
  // Stage 2 sees [1, 5/3, 3].
  const ColumnSummary want = ColumnSummary::Build(std::vector<double>{1, 5.0 / 3, 3});
  const auto& s1 = f.columns[0].stages[1];
  EXPECT_NEAR(Find(s1, "standardize").fitted.stats().center, 17.0 / 9, 1e-15);
  EXPECT_NEAR(Find(s1, "standardize").fitted.stats().scale, want.std, 1e-15);
  EXPECT_EQ(Find(s1, "minmax").fitted.stats().center, 1.0);
  EXPECT_NEAR(Find(s1, "robust").fitted.stats().center, 5.0 / 3, 1e-15);
}

TEST(FitStagewise, OneHotMeanRecoversDiscreteFit) {
  const FeatureMatrix batch = Numeric({{1, NAN, 3}});
  const PipelineLayout l =
      FixLayout(batch, {TfType::kMissingImpute, TfType::kNormalize});
  RelaxedParams r = Uniform(l);
  r.beta[0].row(0).setZero();
  r.beta[0](0, 0) = 1;  // mean
  const FittedPipeline f = FitStagewise(l, r, batch);
  const auto& st = Find(f.columns[0].stages[1], "standardize").fitted.stats();
  EXPECT_EQ(st.center, 2.0);
  EXPECT_EQ(st.scale, std::sqrt(2.0 / 3));
}

TEST(FitStagewise, IdentityStagesSeeRawColumn) {
  const std::vector<double> raw = {4, -1, 9, 2.5, 7, 0};
  const FeatureMatrix batch = Numeric({raw});
  const PipelineLayout l =
      FixLayout(batch, {TfType::kNormalize, TfType::kOutlierRepair,
                        TfType::kDiscretize});
  RelaxedParams r = Uniform(l);
  for (Eigen::Index i = 0; i < r.beta[0].rows(); ++i) {
    r.beta[0].row(i).setZero();
    r.beta[0](i, 0) = 1;
  }
  const FittedPipeline f = FitStagewise(l, r, batch);
  for (size_t i = 0; i < 3; ++i) {
    for (const StageTerm& t : f.columns[0].stages[i]) {
      const FittedOperator direct = FittedOperator::Fit(t.fitted.spec(), raw);
      EXPECT_EQ(t.fitted.stats().center, direct.stats().center);
      EXPECT_EQ(t.fitted.stats().scale, direct.stats().scale);
      EXPECT_EQ(t.fitted.stats().lo, direct.stats().lo);
      EXPECT_EQ(t.fitted.stats().hi, direct.stats().hi);
      EXPECT_EQ(t.fitted.stats().edges, direct.stats().edges);
    }
  }
}

TEST(FitStagewise, Errors) {
  const FeatureMatrix batch = Numeric({{1, NAN, 3}});
  const PipelineLayout no_impute = FixLayout(batch, {TfType::kNormalize});
  EXPECT_THROW(FitStagewise(no_impute, Uniform(no_impute), batch), Error);
  const PipelineLayout l = FixLayout(batch, {TfType::kMissingImpute});
  const std::vector<size_t> none;
  EXPECT_THROW(FitStagewise(l, Uniform(l), batch.SelectRows(none)), Error);
  const FeatureMatrix wide = Numeric({{1, 2}, {3, 4}});
  EXPECT_THROW(FitStagewise(l, Uniform(l), wide), Error);
}

TEST(Forward, MissingValuePastImputationIsRejected) {
  const FeatureMatrix fit = Numeric({{1, 2, 3}});
  const PipelineLayout l = FixLayout(fit, {TfType::kNormalize});
  const FittedPipeline f = FitStagewise(l, Uniform(l), fit);
  Eigen::MatrixXd x(2, 1);
  x << 1, NAN;
  EXPECT_THROW(Forward(l, Uniform(l), f, x), Error);
  EXPECT_THROW(Apply(l, Uniform(l), f, x), Error);
}

TEST(Forward, FlexWithIdentityAlphaMatchesFix) {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> g(0, 3);
  std::vector<double> a(40), b(40);
  for (size_t r = 0; r < 40; ++r) {
    a[r] = r % 7 == 0 ? NAN : g(rng);
    b[r] = g(rng) * 10 + 4;
  }
  const FeatureMatrix batch = Numeric({a, b});
  const PipelineLayout fix = FixLayout(batch, {});
  LayoutOptions fo;
  fo.mode = PrototypeMode::kFlex;
  const PipelineLayout flex = PipelineLayout::Build(BuildCatalog(), batch, fo);
  Rng init(3);
  const PipelineParams params = PipelineParams::Init(flex, 1.0, init);
  RelaxedParams rflex = Relax(flex, params);
  for (AlphaTrace& t : rflex.alpha) t.alpha = Eigen::MatrixXd::Identity(4, 4);
  RelaxedParams rfix;
  rfix.beta = rflex.beta;

  const FittedPipeline ffix = FitStagewise(fix, rfix, batch);
  const FittedPipeline fflex = FitStagewise(flex, rflex, batch);
  const Eigen::MatrixXd yfix = Forward(fix, rfix, ffix, batch.data).output;
  const Eigen::MatrixXd yflex = Forward(flex, rflex, fflex, batch.data).output;
  EXPECT_LE((yfix - yflex).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((Apply(flex, rflex, fflex, batch.data) - yflex).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(Forward, IdentityOnlyTypesPassInputThrough) {
  CatalogConfig cfg;
  cfg.types = {TfType::kNormalize, TfType::kOutlierRepair};
  cfg.normalizers.clear();
  cfg.outlier_repairs.clear();
  const FeatureMatrix batch = Numeric({{3, -2, 8, 0.5}});
  LayoutOptions o;
  o.mode = PrototypeMode::kFlex;
  const PipelineLayout l = PipelineLayout::Build(BuildCatalog(cfg), batch, o);
  Rng rng(26);
  const RelaxedParams r = Relax(l, PipelineParams::Init(l, 2.0, rng));
  const FittedPipeline f = FitStagewise(l, r, batch);
  const Eigen::MatrixXd y = Forward(l, r, f, batch.data).output;
  EXPECT_LE((y - batch.data).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, FlexMatchesBruteForceDoubleSum) {
  CatalogConfig cfg;
  cfg.types = {TfType::kNormalize, TfType::kOutlierRepair};
  cfg.normalizers = {"standardize"};
  cfg.outlier_repairs = {"zscore(2)"};
  const std::vector<double> raw = {-4, -1, 0, 0.5, 1, 2, 3, 11};
  const FeatureMatrix batch = Numeric({raw});
  LayoutOptions o;
  o.mode = PrototypeMode::kFlex;
  const PipelineLayout l = PipelineLayout::Build(BuildCatalog(cfg), batch, o);
  Rng rng(27);
  const RelaxedParams r = Relax(l, PipelineParams::Init(l, 0, rng));
  ASSERT_NEAR(r.Alpha(0)(0, 1), 0.5, 1e-15);
  Eigen::MatrixXd beta(2, 2);
  beta << 0.3, 0.7, 0.6, 0.4;
  RelaxedParams rb = r;
  rb.beta[0] = beta;

  // Oracle: fit each candidate on the stage input, mix with alpha * beta.
  const std::vector<std::vector<OperatorSpec>> ops = {
      {OperatorSpec::Identity(TfType::kNormalize), OperatorSpec::Parse("standardize")},
      {OperatorSpec::Identity(TfType::kOutlierRepair), OperatorSpec::Parse("zscore(2)")}};
  std::vector<double> x = raw;
  for (int stage = 0; stage < 2; ++stage) {
    std::vector<double> next(x.size(), 0.0);
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        const FittedOperator f = FittedOperator::Fit(ops[j][k], x);
        for (size_t n = 0; n < x.size(); ++n) {
          next[n] += 0.5 * beta(j, k) * f.Transform(x[n]);
        }
      }
    }
    x = next;
  }
  const FittedPipeline f = FitStagewise(l, rb, batch);
  const Eigen::MatrixXd y = Forward(l, rb, f, batch.data).output;
  for (size_t n = 0; n < raw.size(); ++n) {
    EXPECT_NEAR(y(static_cast<Eigen::Index>(n), 0), x[n], 1e-12);
  }
}

TEST(Forward, CategoricalImputerMixture) {
  RawTable t;
  t.target_name = "y";
  t.columns.push_back({"c", ColumnKind::kCategorical, {},
                       {"a", "b", "b", std::nullopt}});
  t.target = {"0", "1", "0", "1"};
  const FeatureMatrix batch = Encode(t, t, t).train;
  ASSERT_EQ(batch.cols(), 3);  // a, b, MISSING
  const PipelineLayout l = FixLayout(batch, {});
  RelaxedParams r = Uniform(l);
  const FittedPipeline f = FitStagewise(l, r, batch);
  const Eigen::MatrixXd y = Forward(l, r, f, batch.data).output;
  // Observed rows pass through unchanged.
  EXPECT_EQ(y(1, 1), 1.0);
  EXPECT_EQ(y(0, 0), 1.0);
  // Missing row: half on the modal slot "b", half on MISSING.
  EXPECT_EQ(y(3, 0), 0.0);
  EXPECT_EQ(y(3, 1), 0.5);
  EXPECT_EQ(y(3, 2), 0.5);
  r.beta[0].row(0) << 0, 1, 0, 0, 0, 0, 0, 0, 0;  // dummy only
  const FittedPipeline fd = FitStagewise(l, r, batch);
  const Eigen::MatrixXd yd = Forward(l, r, fd, batch.data).output;
  EXPECT_EQ(yd(3, 1), 0.0);
  EXPECT_EQ(yd(3, 2), 1.0);
}

TEST(Backward, LayoutGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(28);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> a(30), b(30);
  for (size_t r = 0; r < 30; ++r) {
    a[r] = r % 5 == 0 ? NAN : g(rng);
    b[r] = 3 * g(rng) + 1;
  }
  const FeatureMatrix batch = Numeric({a, b});
  CatalogConfig cfg;
  cfg.types = {TfType::kMissingImpute, TfType::kNormalize};
  LayoutOptions o;
  o.mode = PrototypeMode::kFlex;
  const PipelineLayout l = PipelineLayout::Build(BuildCatalog(cfg), batch, o);
  Rng init(5);
  const RelaxedParams r = Relax(l, PipelineParams::Init(l, 0.5, init));
  const FittedPipeline f = FitStagewise(l, r, batch);
  Eigen::MatrixXd c(30, 2);
  for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = g(rng);
  auto loss = [&](const RelaxedParams& rp) {
    return Forward(l, rp, f, batch.data).output.cwiseProduct(c).sum();
  };
  const PipelineForward fw = Forward(l, r, f, batch.data);
  const PipelineBackward bw = Backward(l, r, f, fw.tape, c);
  for (size_t u = 0; u < 2; ++u) {
    for (Eigen::Index k = 0; k < r.beta[u].size(); ++k) {
      if (!l.Mask(u)(k)) continue;
      RelaxedParams p = r, m = r;
      p.beta[u](k) += 1e-6;
      m.beta[u](k) -= 1e-6;
      const double fd = (loss(p) - loss(m)) / 2e-6;
      EXPECT_NEAR(bw.grads.dbeta[u](k), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
  // Imputed cells have no path back to the input.
  for (Eigen::Index row = 0; row < 30; row += 5) EXPECT_EQ(bw.dx0(row, 0), 0.0);
  EXPECT_NEAR(bw.dx0(1, 1),
              c(1, 1) * (r.beta[1](1, 0) + r.beta[1](1, 1) / f.columns[1].stages[1][1].fitted.stats().scale +
                         r.beta[1](1, 2) / f.columns[1].stages[1][2].fitted.stats().scale +
                         r.beta[1](1, 3) / f.columns[1].stages[1][3].fitted.stats().scale +
                         r.beta[1](1, 4) / f.columns[1].stages[1][4].fitted.stats().scale),
              1e-6);
}

}  // namespace
}  // namespace prepsearch
