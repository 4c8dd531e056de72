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

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "prepsearch/baselines.h"
#include "prepsearch/error.h"
#include "test_support.h"

namespace prepsearch {
namespace {

FeatureMatrix NumericColumn(const std::vector<double>& v) {
  RawTable t;
  t.target_name = "y";
  t.columns.push_back({"a", ColumnKind::kNumeric, v, {}});
  for (size_t r = 0; r < v.size(); ++r) t.target.push_back(std::to_string(r % 2));
  return Encode(t, t, t).train;
}

Eigen::MatrixXd DefaultTrain(const FeatureMatrix& m) {
  return ApplyDiscrete(DefaultPipeline(), m, m, m).train;
}

TEST(DefaultPipeline, Shape) {
  const DiscretePipeline p = DefaultPipeline();
  ASSERT_EQ(p.stages.size(), 2u);
  EXPECT_EQ(p.stages[0].Name(), "mean");
  EXPECT_EQ(p.stages[1].Name(), "standardize");
  EXPECT_NO_THROW(p.Validate());
}

TEST(DefaultPipeline, WorkedExamples) {
  const Eigen::MatrixXd x = DefaultTrain(NumericColumn({0, 2, NAN}));
  const double sd = std::sqrt(2.0 / 3);
  EXPECT_NEAR(x(0, 0), -1 / sd, 1e-15);
  EXPECT_NEAR(x(1, 0), 1 / sd, 1e-15);
  EXPECT_EQ(x(2, 0), 0.0);

  const Eigen::MatrixXd z = DefaultTrain(NumericColumn({-1, 1, -1, 1}));
  EXPECT_NEAR(z(0, 0), -1, 1e-9);
  EXPECT_NEAR(z(3, 0), 1, 1e-9);

  const Eigen::MatrixXd c = DefaultTrain(NumericColumn({4, 4, NAN, 4}));
  EXPECT_EQ(c.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DefaultPipeline, StandardizedTrainColumns) {
  SynthSpec spec;
  spec.n = 400;
  spec.d = 5;
  spec.scales = {1, 1000, 0.01, 1, 7};
  spec.offsets = {0, 50, -3, 0, 0};
  spec.missing_rate = 0.3;
  spec.outlier_rate = 0.05;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const EncodedSplits e = testing::SynthSplits(spec);
    const TransformedSplits x = ApplyDiscrete(DefaultPipeline(), e.train, e.val, e.test);
    EXPECT_TRUE(x.train.allFinite());
    EXPECT_TRUE(x.val.allFinite());
    EXPECT_TRUE(x.test.allFinite());
    for (Eigen::Index c = 0; c < x.train.cols(); ++c) {
      const double mean = x.train.col(c).mean();
      const double sd = std::sqrt((x.train.col(c).array() - mean).square().mean());
      EXPECT_LT(std::abs(mean), 1e-9);
      EXPECT_LT(std::abs(sd - 1), 1e-6);
    }
  }
}

TEST(DefaultPipeline, CategoricalGroupsGetMostFrequent) {
  RawTable t;
  t.target_name = "y";
  t.columns.push_back({"c", ColumnKind::kCategorical, {}, {"a", "b", "b", std::nullopt}});
  t.target = {"0", "1", "0", "1"};
  const FeatureMatrix m = Encode(t, t, t).train;
  const Eigen::MatrixXd x = DefaultTrain(m);
  EXPECT_EQ(x.row(3), (Eigen::RowVector3d(0, 1, 0)));
  EXPECT_EQ(x.row(0), (Eigen::RowVector3d(1, 0, 0)));
}

TEST(DiscretePipeline, Validation) {
  DiscretePipeline p;
  p.stages = {OperatorSpec::Parse("standardize"), OperatorSpec::Parse("mean")};
  EXPECT_THROW(p.Validate(), Error);
  p.stages = {OperatorSpec::Parse("mean"), OperatorSpec::Parse("minmax"),
              OperatorSpec::Parse("robust")};
  EXPECT_THROW(p.Validate(), Error);
  p.stages = {OperatorSpec::Parse("median"), OperatorSpec::Parse("iqr(2)")};
  EXPECT_NO_THROW(p.Validate());
  EXPECT_EQ(p.ToJson().size(), 2u);
}

SearchConfig Small(uint64_t seed) {
  SearchConfig c;
  c.epochs = 3;
  c.batch_size = 64;
  c.seed = seed;
  return c;
}

EncodedSplits Data(uint64_t seed) {
  SynthSpec spec;
  spec.n = 300;
  spec.d = 3;
  spec.scales = {1, 100, 1};
  spec.missing_rate = 0.2;
  spec.seed = seed;
  return testing::SynthSplits(spec);
}

TEST(TrainFixed, ProtocolAndPassCounts) {
  const EncodedSplits e = Data(1);
  const SearchResult r = RunDefault(Small(1), e.train, e.val, e.test);
  EXPECT_EQ(r.epochs.size(), 3u);
  EXPECT_EQ(r.passes.fit, 1);
  EXPECT_EQ(r.passes.iterations, 9);
  EXPECT_EQ(r.passes.forward, 9);
  EXPECT_EQ(r.passes.backward, 9);
  EXPECT_TRUE(r.best_params.tau.empty());
  double best = INFINITY;
  for (const EpochRecord& rec : r.epochs) best = std::min(best, rec.val_loss);
  EXPECT_EQ(r.best_val_loss, best);
}

TEST(RandomSearch, SingleTrialEqualsTrainingThatPipeline) {
  const EncodedSplits e = Data(2);
  const SearchConfig c = Small(2);
  const RandomSearchResult rs = RandomSearch(c, 1, e.train, e.val, e.test);
  const DiscretePipeline p = SampleTrialPipeline(c, 0);
  const SearchResult direct = TrainFixed(
      c, ApplyDiscrete(p, e.train, e.val, e.test), e.train, e.val, e.test);
  EXPECT_EQ(rs.best_trial, 0u);
  EXPECT_EQ(rs.best.test_accuracy, direct.test_accuracy);
  EXPECT_EQ(rs.best.best_val_loss, direct.best_val_loss);
  EXPECT_EQ(rs.trials[0].pipeline.Name(), p.Name());
}

TEST(RandomSearch, CollapsedCatalogGivesIdenticalTrials) {
  const EncodedSplits e = Data(3);
  SearchConfig c = Small(3);
  c.catalog.imputers = {"median"};
  c.catalog.normalizers.clear();
  c.catalog.outlier_repairs.clear();
  c.catalog.discretizers.clear();
  const RandomSearchResult rs = RandomSearch(c, 4, e.train, e.val, e.test);
  ASSERT_EQ(rs.trials.size(), 4u);
  for (const TrialRecord& t : rs.trials) {
    EXPECT_EQ(t.pipeline.Name(), rs.trials[0].pipeline.Name());
    EXPECT_EQ(t.val_accuracy, rs.trials[0].val_accuracy);
    EXPECT_EQ(t.test_accuracy, rs.trials[0].test_accuracy);
  }
  EXPECT_EQ(rs.best_trial, 0u);
}

TEST(RandomSearch, DeterministicAndPrefixMonotone) {
  const EncodedSplits e = Data(4);
  const SearchConfig c = Small(4);
  const RandomSearchResult a = RandomSearch(c, 6, e.train, e.val, e.test);
  const RandomSearchResult b = RandomSearch(c, 6, e.train, e.val, e.test);
  EXPECT_EQ(a.best_trial, b.best_trial);
  EXPECT_EQ(a.best.test_accuracy, b.best.test_accuracy);
  double prev = -1;
  for (size_t n = 1; n <= 6; ++n) {
    const RandomSearchResult r = RandomSearch(c, n, e.train, e.val, e.test);
    for (size_t i = 0; i < n; ++i) {
      EXPECT_EQ(r.trials[i].pipeline.Name(), a.trials[i].pipeline.Name());
    }
    const double best = r.trials[r.best_trial].val_accuracy;
    EXPECT_GE(best, prev);
    prev = best;
  }
  // Best trial: max validation accuracy, earliest on ties.
  size_t want = 0;
  for (size_t i = 1; i < a.trials.size(); ++i) {
    if (a.trials[i].val_accuracy > a.trials[want].val_accuracy) want = i;
  }
  EXPECT_EQ(a.best_trial, want);
  EXPECT_EQ(a.passes.fit, 6);
  EXPECT_THROW(RandomSearch(c, 0, e.train, e.val, e.test), Error);
}

}  // namespace
}  // namespace prepsearch
