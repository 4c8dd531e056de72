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

#ifndef PREPSEARCH_DATA_INGEST_H_
#define PREPSEARCH_DATA_INGEST_H_

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace prepsearch {

enum class ColumnKind { kNumeric, kCategorical };

// One named column. Numeric columns store NaN for missing cells; categorical
// columns store std::nullopt.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<double> numbers;
  std::vector<std::optional<std::string>> symbols;

  size_t size() const {
    return kind == ColumnKind::kNumeric ? numbers.size() : symbols.size();
  }
  bool IsMissing(size_t row) const;
};

struct RawTable {
  std::vector<Column> columns;
  std::string target_name;
  std::vector<std::string> target;

  size_t row_count() const { return target.size(); }
  RawTable SelectRows(std::span<const size_t> rows) const;
  const Column* Find(const std::string& name) const;
};

struct CsvOptions {
  std::vector<std::string> missing_tokens = {"", "?", "NA", "NaN"};
  std::map<std::string, ColumnKind> type_overrides;
};

// Rows whose target cell is a missing token are dropped.
RawTable ParseCsv(std::istream& in, const std::string& target_column,
                  const CsvOptions& options = {});
RawTable LoadCsv(const std::string& path, const std::string& target_column,
                 const CsvOptions& options = {});
void WriteCsv(const RawTable& table, std::ostream& out);

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  uint64_t seed = 0;

  void Validate() const;
};

struct SplitTables {
  RawTable train;
  RawTable val;
  RawTable test;
};

// Seeded shuffle, then floor(frac * n) rows per part; remainder goes to train.
SplitTables Split(const RawTable& table, const SplitSpec& spec);
// Row indices of each part in the original table (train, val, test).
std::vector<std::vector<size_t>> SplitIndices(size_t row_count,
                                              const SplitSpec& spec);

struct ColumnMeta {
  std::string source;   // originating raw column
  int group = -1;       // categorical group id, -1 for numeric columns
  std::string category;
  bool missing_slot = false;
};

struct CategoricalGroup {
  std::string source;
  std::vector<size_t> columns;  // encoded column indices, MISSING slot last
};

struct FeatureMatrix {
  Eigen::MatrixXd data;  // rows x c, NaN marks missing
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> missing;
  std::vector<ColumnMeta> meta;
  std::vector<CategoricalGroup> groups;
  std::vector<int> labels;
  int num_classes = 0;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  FeatureMatrix SelectRows(std::span<const size_t> rows) const;
  std::vector<std::string> ColumnNames() const;
};

struct ColumnEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<std::string> categories;  // sorted; MISSING slot is implicit
};

class EncoderState {
 public:
  EncoderState() = default;
  EncoderState(std::vector<ColumnEncoding> columns,
               std::vector<std::string> classes);

  FeatureMatrix Encode(const RawTable& table) const;

  const std::vector<ColumnEncoding>& columns() const { return columns_; }
  const std::vector<std::string>& classes() const { return classes_; }
  size_t EncodedWidth() const;

  nlohmann::json ToJson() const;
  static EncoderState FromJson(const nlohmann::json& doc);

 private:
  std::vector<ColumnEncoding> columns_;
  std::vector<std::string> classes_;
};

struct EncodedSplits {
  FeatureMatrix train;
  FeatureMatrix val;
  FeatureMatrix test;
  EncoderState state;
};

// Category sets come from train only; the class list is the union over the
// three splits (numeric order when every label parses as a number).
EncodedSplits Encode(const RawTable& train, const RawTable& val,
                     const RawTable& test);

extern const char kMissingCategory[];

}  // namespace prepsearch

#endif  // PREPSEARCH_DATA_INGEST_H_
