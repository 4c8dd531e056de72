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

#include "prepsearch/prepsearch.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "json.hpp"
#include "prepsearch/error.h"
#include "prepsearch/run.h"
#include "prepsearch/synth.h"

struct ps_result {
  std::string summary;
  std::vector<std::string> metrics;
  std::string pipeline;
  std::string params;
  bool has_pipeline = false;
  double test_accuracy = 0;
  double val_accuracy = 0;
  prepsearch::RunOutput output;
};

namespace {

thread_local std::string last_error;

ps_status ToStatus(prepsearch::ErrorCode code) {
  switch (code) {
    case prepsearch::ErrorCode::kInvalidArgument:
      return PS_ERR_INVALID_ARGUMENT;
    case prepsearch::ErrorCode::kNotFound:
      return PS_ERR_NOT_FOUND;
    case prepsearch::ErrorCode::kDataError:
      return PS_ERR_DATA;
    case prepsearch::ErrorCode::kDivergence:
      return PS_ERR_DIVERGENCE;
    case prepsearch::ErrorCode::kInternal:
      return PS_ERR_INTERNAL;
  }
  return PS_ERR_INTERNAL;
}

template <typename F>
ps_status Guard(F&& body) {
  last_error.clear();
  try {
    body();
    return PS_OK;
  } catch (const prepsearch::Error& e) {
    last_error = e.what();
    return ToStatus(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("invalid JSON: ") + e.what();
    return PS_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PS_ERR_INTERNAL;
  }
}

ps_status NullArg(const char* what) {
  last_error = std::string(what) + " is null";
  return PS_ERR_INVALID_ARGUMENT;
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* ps_version(void) { return "0.1.0"; }

const char* ps_last_error(void) { return last_error.c_str(); }

const char* ps_status_name(ps_status status) {
  switch (status) {
    case PS_OK:
      return "ok";
    case PS_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case PS_ERR_NOT_FOUND:
      return "not_found";
    case PS_ERR_DATA:
      return "data_error";
    case PS_ERR_DIVERGENCE:
      return "divergence";
    case PS_ERR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

ps_status ps_run_json(const char* config_json, ps_result** out) {
  if (config_json == nullptr) return NullArg("config_json");
  if (out == nullptr) return NullArg("out");
  *out = nullptr;
  return Guard([&] {
    const auto config =
        prepsearch::RunConfig::FromJson(nlohmann::json::parse(config_json));
    auto result = std::make_unique<ps_result>();
    result->output = prepsearch::Run(config);
    const auto& o = result->output;
    result->summary = o.summary.dump();
    for (const auto& m : o.metrics) result->metrics.push_back(m.dump());
    if (o.pipeline) {
      result->has_pipeline = true;
      result->pipeline = o.pipeline->dump();
      result->params = o.params->dump();
    }
    result->test_accuracy = o.summary.at("test_accuracy").get<double>();
    result->val_accuracy = o.summary.at("val_accuracy").get<double>();
    *out = result.release();
  });
}

void ps_result_free(ps_result* result) { delete result; }

const char* ps_result_summary(const ps_result* result) {
  return result == nullptr ? nullptr : result->summary.c_str();
}

size_t ps_result_metrics_count(const ps_result* result) {
  return result == nullptr ? 0 : result->metrics.size();
}

const char* ps_result_metrics_line(const ps_result* result, size_t i) {
  if (result == nullptr || i >= result->metrics.size()) return nullptr;
  return result->metrics[i].c_str();
}

const char* ps_result_pipeline(const ps_result* result) {
  if (result == nullptr || !result->has_pipeline) return nullptr;
  return result->pipeline.c_str();
}

const char* ps_result_params(const ps_result* result) {
  if (result == nullptr || !result->has_pipeline) return nullptr;
  return result->params.c_str();
}

double ps_result_test_accuracy(const ps_result* result) {
  return result == nullptr ? 0.0 : result->test_accuracy;
}

double ps_result_val_accuracy(const ps_result* result) {
  return result == nullptr ? 0.0 : result->val_accuracy;
}

ps_status ps_result_write(const ps_result* result, const char* dir) {
  if (result == nullptr) return NullArg("result");
  if (dir == nullptr) return NullArg("dir");
  return Guard([&] { prepsearch::WriteRunOutput(result->output, dir); });
}

ps_status ps_compare_json(const char* configs_json, char** table_json) {
  if (configs_json == nullptr) return NullArg("configs_json");
  if (table_json == nullptr) return NullArg("table_json");
  *table_json = nullptr;
  return Guard([&] {
    const auto doc = nlohmann::json::parse(configs_json);
    prepsearch::Check(doc.is_array(), prepsearch::ErrorCode::kInvalidArgument,
                      "compare expects a JSON array of run configs");
    std::vector<prepsearch::RunConfig> configs;
    for (const auto& c : doc) configs.push_back(prepsearch::RunConfig::FromJson(c));
    *table_json = CopyString(prepsearch::Compare(configs).dump(2));
  });
}

ps_status ps_synth_csv(const char* spec_json, const char* path) {
  if (spec_json == nullptr) return NullArg("spec_json");
  if (path == nullptr) return NullArg("path");
  return Guard([&] {
    const auto spec =
        prepsearch::SynthSpec::FromJson(nlohmann::json::parse(spec_json));
    std::ofstream f(path, std::ios::binary);
    prepsearch::Check(static_cast<bool>(f), prepsearch::ErrorCode::kNotFound,
                      std::string("cannot write ") + path);
    prepsearch::WriteCsv(prepsearch::Generate(spec).corrupted, f);
  });
}

void ps_string_free(char* s) { std::free(s); }

}  // extern "C"
