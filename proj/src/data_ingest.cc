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

#include "prepsearch/data_ingest.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "prepsearch/error.h"
#include "prepsearch/random.h"

namespace prepsearch {

const char kMissingCategory[] = "__MISSING__";

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<double> ParseNumber(const std::string& cell) {
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  if (begin == end) return std::nullopt;
  if (*begin == '+') ++begin;
  double value = 0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Splits one CSV record, honoring double quotes. Returns false at EOF.
bool ReadRecord(std::istream& in, std::vector<std::string>& cells) {
  cells.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  std::string cell;
  bool quoted = false;
  for (;;) {
    for (size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cell.push_back('"');
            ++i;
          } else {
            quoted = false;
          }
        } else {
          cell.push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(std::move(cell));
        cell.clear();
      } else if (c != '\r') {
        cell.push_back(c);
      }
    }
    if (!quoted) break;
    // Quoted field spans a newline.
    cell.push_back('\n');
    if (!std::getline(in, line)) break;
  }
  cells.push_back(std::move(cell));
  return true;
}

bool AllNumeric(const std::vector<std::string>& labels) {
  return std::all_of(labels.begin(), labels.end(), [](const std::string& s) {
    return ParseNumber(s).has_value();
  });
}

}  // namespace

bool Column::IsMissing(size_t row) const {
  return kind == ColumnKind::kNumeric ? std::isnan(numbers[row])
                                      : !symbols[row].has_value();
}

RawTable RawTable::SelectRows(std::span<const size_t> rows) const {
  RawTable out;
  out.target_name = target_name;
  out.target.reserve(rows.size());
  for (const size_t r : rows) out.target.push_back(target[r]);
  for (const Column& col : columns) {
    Column c;
    c.name = col.name;
    c.kind = col.kind;
    if (col.kind == ColumnKind::kNumeric) {
      c.numbers.reserve(rows.size());
      for (const size_t r : rows) c.numbers.push_back(col.numbers[r]);
    } else {
      c.symbols.reserve(rows.size());
      for (const size_t r : rows) c.symbols.push_back(col.symbols[r]);
    }
    out.columns.push_back(std::move(c));
  }
  return out;
}

const Column* RawTable::Find(const std::string& name) const {
  for (const Column& c : columns) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

RawTable ParseCsv(std::istream& in, const std::string& target_column,
                  const CsvOptions& options) {
  std::vector<std::string> header;
  Check(ReadRecord(in, header), ErrorCode::kDataError,
        "CSV input has no header row");
  const auto target_it = std::find(header.begin(), header.end(), target_column);
  Check(target_it != header.end(), ErrorCode::kInvalidArgument,
        "target column '" + target_column + "' not found in header");
  const size_t target_index = target_it - header.begin();
  const std::set<std::string> missing(options.missing_tokens.begin(),
                                      options.missing_tokens.end());

  std::vector<std::vector<std::optional<std::string>>> cells(header.size());
  std::vector<std::string> record;
  size_t line = 1;
  while (ReadRecord(in, record)) {
    ++line;
    if (record.size() == 1 && record[0].empty()) continue;  // blank line
    Check(record.size() == header.size(), ErrorCode::kDataError,
          "CSV line " + std::to_string(line) + " has " +
              std::to_string(record.size()) + " cells, expected " +
              std::to_string(header.size()));
    if (missing.count(record[target_index])) continue;
    for (size_t c = 0; c < header.size(); ++c) {
      if (missing.count(record[c])) {
        cells[c].push_back(std::nullopt);
      } else {
        cells[c].push_back(std::move(record[c]));
      }
    }
  }
  Check(!cells[target_index].empty(), ErrorCode::kDataError,
        "CSV input has zero data rows");

  RawTable table;
  table.target_name = target_column;
  for (auto& v : cells[target_index]) table.target.push_back(*v);
  for (size_t c = 0; c < header.size(); ++c) {
    if (c == target_index) continue;
    Column col;
    col.name = header[c];
    bool numeric = std::all_of(
        cells[c].begin(), cells[c].end(), [](const auto& v) {
          return !v.has_value() || ParseNumber(*v).has_value();
        });
    if (const auto it = options.type_overrides.find(col.name);
        it != options.type_overrides.end()) {
      numeric = it->second == ColumnKind::kNumeric;
    }
    if (numeric) {
      col.kind = ColumnKind::kNumeric;
      col.numbers.reserve(cells[c].size());
      for (const auto& v : cells[c]) {
        if (!v.has_value()) {
          col.numbers.push_back(kNaN);
          continue;
        }
        const auto parsed = ParseNumber(*v);
        Check(parsed.has_value(), ErrorCode::kDataError,
              "column '" + col.name + "' forced numeric but cell '" + *v +
                  "' is not a finite number");
        col.numbers.push_back(*parsed);
      }
    } else {
      col.kind = ColumnKind::kCategorical;
      col.symbols = std::move(cells[c]);
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

RawTable LoadCsv(const std::string& path, const std::string& target_column,
                 const CsvOptions& options) {
  std::ifstream in(path);
  Check(in.good(), ErrorCode::kNotFound, "cannot read CSV file '" + path + "'");
  return ParseCsv(in, target_column, options);
}

void WriteCsv(const RawTable& table, std::ostream& out) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };
  for (const Column& col : table.columns) out << quote(col.name) << ',';
  out << quote(table.target_name) << '\n';
  std::ostringstream num;
  num.precision(17);
  for (size_t r = 0; r < table.row_count(); ++r) {
    for (const Column& col : table.columns) {
      if (!col.IsMissing(r)) {
        if (col.kind == ColumnKind::kNumeric) {
          num.str("");
          num << col.numbers[r];
          out << num.str();
        } else {
          out << quote(*col.symbols[r]);
        }
      }
      out << ',';
    }
    out << quote(table.target[r]) << '\n';
  }
}

void SplitSpec::Validate() const {
  for (const double f : {train_frac, val_frac, test_frac}) {
    Check(f > 0 && f < 1, ErrorCode::kInvalidArgument,
          "split fractions must lie in (0, 1)");
  }
  Check(std::abs(train_frac + val_frac + test_frac - 1.0) <= 1e-9,
        ErrorCode::kInvalidArgument, "split fractions must sum to 1");
}

std::vector<std::vector<size_t>> SplitIndices(size_t row_count,
                                              const SplitSpec& spec) {
  spec.Validate();
  Check(row_count >= 3, ErrorCode::kDataError,
        "need at least 3 rows to split");
  const auto n = static_cast<double>(row_count);
  // The small slack keeps exact products such as 0.2 * 10 from flooring down.
  const size_t n_val = static_cast<size_t>(std::floor(spec.val_frac * n + 1e-9));
  const size_t n_test =
      static_cast<size_t>(std::floor(spec.test_frac * n + 1e-9));
  Check(n_val > 0 && n_test > 0 && n_val + n_test < row_count,
        ErrorCode::kDataError, "split leaves an empty partition");
  const size_t n_train = row_count - n_val - n_test;

  std::vector<size_t> order(row_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = MakeRng(spec.seed, "split");
  Shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<size_t>> parts(3);
  parts[0].assign(order.begin(), order.begin() + n_train);
  parts[1].assign(order.begin() + n_train, order.begin() + n_train + n_val);
  parts[2].assign(order.begin() + n_train + n_val, order.end());
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

SplitTables Split(const RawTable& table, const SplitSpec& spec) {
  const auto parts = SplitIndices(table.row_count(), spec);
  return {table.SelectRows(parts[0]), table.SelectRows(parts[1]),
          table.SelectRows(parts[2])};
}

FeatureMatrix FeatureMatrix::SelectRows(std::span<const size_t> rows) const {
  FeatureMatrix out;
  out.meta = meta;
  out.groups = groups;
  out.num_classes = num_classes;
  out.data.resize(static_cast<Eigen::Index>(rows.size()), data.cols());
  out.missing.resize(static_cast<Eigen::Index>(rows.size()), data.cols());
  out.labels.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.data.row(static_cast<Eigen::Index>(i)) = data.row(r);
    out.missing.row(static_cast<Eigen::Index>(i)) = missing.row(r);
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::vector<std::string> FeatureMatrix::ColumnNames() const {
  std::vector<std::string> names;
  names.reserve(meta.size());
  for (const ColumnMeta& m : meta) {
    names.push_back(m.group < 0 ? m.source : m.source + "=" + m.category);
  }
  return names;
}

EncoderState::EncoderState(std::vector<ColumnEncoding> columns,
                           std::vector<std::string> classes)
    : columns_(std::move(columns)), classes_(std::move(classes)) {}

size_t EncoderState::EncodedWidth() const {
  size_t width = 0;
  for (const ColumnEncoding& c : columns_) {
    width += c.kind == ColumnKind::kNumeric ? 1 : c.categories.size() + 1;
  }
  return width;
}

FeatureMatrix EncoderState::Encode(const RawTable& table) const {
  const auto rows = static_cast<Eigen::Index>(table.row_count());
  const auto width = static_cast<Eigen::Index>(EncodedWidth());
  FeatureMatrix fm;
  fm.data = Eigen::MatrixXd::Zero(rows, width);
  fm.missing = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
      rows, width, false);
  fm.num_classes = static_cast<int>(classes_.size());

  std::unordered_map<std::string, int> class_index;
  for (size_t k = 0; k < classes_.size(); ++k) {
    class_index[classes_[k]] = static_cast<int>(k);
  }
  fm.labels.reserve(table.row_count());
  for (const std::string& label : table.target) {
    const auto it = class_index.find(label);
    Check(it != class_index.end(), ErrorCode::kDataError,
          "label '" + label + "' is not a known class");
    fm.labels.push_back(it->second);
  }

  Eigen::Index out = 0;
  for (const ColumnEncoding& enc : columns_) {
    const Column* col = table.Find(enc.name);
    Check(col != nullptr, ErrorCode::kDataError,
          "column '" + enc.name + "' missing from table");
    Check(col->kind == enc.kind, ErrorCode::kDataError,
          "column '" + enc.name + "' changed kind between tables");
    if (enc.kind == ColumnKind::kNumeric) {
      fm.meta.push_back({enc.name, -1, "", false});
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double v = col->numbers[static_cast<size_t>(r)];
        fm.data(r, out) = v;
        fm.missing(r, out) = std::isnan(v);
      }
      ++out;
      continue;
    }
    CategoricalGroup group;
    group.source = enc.name;
    const int group_id = static_cast<int>(fm.groups.size());
    const auto width_g = static_cast<Eigen::Index>(enc.categories.size() + 1);
    for (Eigen::Index k = 0; k < width_g; ++k) {
      const bool is_missing_slot = k + 1 == width_g;
      fm.meta.push_back({enc.name, group_id,
                         is_missing_slot ? kMissingCategory
                                         : enc.categories[static_cast<size_t>(k)],
                         is_missing_slot});
      group.columns.push_back(static_cast<size_t>(out + k));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& sym = col->symbols[static_cast<size_t>(r)];
      if (!sym.has_value()) {
        for (Eigen::Index k = 0; k < width_g; ++k) {
          fm.data(r, out + k) = kNaN;
          fm.missing(r, out + k) = true;
        }
        continue;
      }
      const auto it = std::lower_bound(enc.categories.begin(),
                                       enc.categories.end(), *sym);
      const Eigen::Index slot =
          (it != enc.categories.end() && *it == *sym)
              ? static_cast<Eigen::Index>(it - enc.categories.begin())
              : width_g - 1;  // unseen category
      fm.data(r, out + slot) = 1.0;
    }
    fm.groups.push_back(std::move(group));
    out += width_g;
  }
  return fm;
}

nlohmann::json EncoderState::ToJson() const {
  nlohmann::json doc;
  doc["classes"] = classes_;
  auto& cols = doc["columns"] = nlohmann::json::array();
  for (const ColumnEncoding& c : columns_) {
    nlohmann::json j;
    j["name"] = c.name;
    j["kind"] = c.kind == ColumnKind::kNumeric ? "numeric" : "categorical";
    if (c.kind == ColumnKind::kCategorical) j["categories"] = c.categories;
    cols.push_back(std::move(j));
  }
  return doc;
}

EncoderState EncoderState::FromJson(const nlohmann::json& doc) {
  std::vector<ColumnEncoding> columns;
  for (const auto& j : doc.at("columns")) {
    ColumnEncoding c;
    c.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    Check(kind == "numeric" || kind == "categorical",
          ErrorCode::kInvalidArgument, "unknown column kind '" + kind + "'");
    c.kind = kind == "numeric" ? ColumnKind::kNumeric : ColumnKind::kCategorical;
    if (c.kind == ColumnKind::kCategorical) {
      c.categories = j.at("categories").get<std::vector<std::string>>();
    }
    columns.push_back(std::move(c));
  }
  return EncoderState(std::move(columns),
                      doc.at("classes").get<std::vector<std::string>>());
}

EncodedSplits Encode(const RawTable& train, const RawTable& val,
                     const RawTable& test) {
  for (const RawTable* t : {&val, &test}) {
    Check(t->columns.size() == train.columns.size(), ErrorCode::kDataError,
          "splits have different column sets");
    for (size_t c = 0; c < train.columns.size(); ++c) {
      Check(t->columns[c].name == train.columns[c].name &&
                t->columns[c].kind == train.columns[c].kind,
            ErrorCode::kDataError, "splits have different column sets");
    }
  }
  std::vector<ColumnEncoding> columns;
  for (const Column& col : train.columns) {
    ColumnEncoding enc;
    enc.name = col.name;
    enc.kind = col.kind;
    if (col.kind == ColumnKind::kCategorical) {
      std::set<std::string> seen;
      for (const auto& s : col.symbols) {
        if (s.has_value()) seen.insert(*s);
      }
      Check(!seen.empty(), ErrorCode::kDataError,
            "categorical column '" + col.name +
                "' has no observed categories in train");
      enc.categories.assign(seen.begin(), seen.end());
    }
    columns.push_back(std::move(enc));
  }

  std::set<std::string> label_set;
  for (const RawTable* t : {&train, &val, &test}) {
    label_set.insert(t->target.begin(), t->target.end());
  }
  std::vector<std::string> classes(label_set.begin(), label_set.end());
  if (AllNumeric(classes)) {
    std::stable_sort(classes.begin(), classes.end(),
                     [](const std::string& a, const std::string& b) {
                       return *ParseNumber(a) < *ParseNumber(b);
                     });
  }

  EncodedSplits out;
  out.state = EncoderState(std::move(columns), std::move(classes));
  out.train = out.state.Encode(train);
  out.val = out.state.Encode(val);
  out.test = out.state.Encode(test);
  return out;
}

}  // namespace prepsearch
