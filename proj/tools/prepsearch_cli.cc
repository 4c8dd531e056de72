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

// Command-line front end over the C interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prepsearch/prepsearch.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int ExitCode(ps_status s) {
  switch (s) {
    case PS_OK:
      return kExitOk;
    case PS_ERR_INVALID_ARGUMENT:
    case PS_ERR_NOT_FOUND:
      return kExitConfig;
    case PS_ERR_DIVERGENCE:
      return kExitDivergence;
    default:
      return kExitFailure;
  }
}

int Report(ps_status s) {
  std::cerr << "prepsearch: " << ps_status_name(s) << ": " << ps_last_error()
            << "\n";
  return ExitCode(s);
}

std::string ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json ParseJson(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

// Inline JSON when it looks like an object, otherwise a file path.
json JsonArg(const std::string& arg, const std::string& what) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') return ParseJson(arg, what);
  return ParseJson(ReadFile(arg), what + " " + arg);
}

struct RunFlags {
  std::string config;
  std::string data;
  std::string synth;
  std::string target;
  std::string method;
  std::string split;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::string model;
  std::optional<double> lr1;
  std::optional<double> lr2;
  std::optional<size_t> trials;
  std::string operators;
  std::string ablation;

  void Register(CLI::App* app, bool with_method) {
    app->add_option("--config", config, "JSON run config; flags override it");
    app->add_option("--data", data, "CSV input");
    app->add_option("--synth", synth, "synthetic spec (inline JSON or file)");
    app->add_option("--target", target, "target column");
    if (with_method) {
      app->add_option("--method", method,
                      "diffprep-fix | diffprep-flex | default | random-search");
    }
    app->add_option("--split", split, "train,val,test fractions");
    app->add_option("--seed", seed);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--model", model, "logreg | mlp");
    app->add_option("--lr1", lr1, "pipeline learning rate (Adam)");
    app->add_option("--lr2", lr2, "model learning rate (SGD)");
    app->add_option("--trials", trials, "random-search trials");
    app->add_option("--operators", operators, "operator catalog JSON file");
    app->add_option("--ablation", ablation, "no-feature-wise | train-only")
        ->check(CLI::IsMember({"no-feature-wise", "train-only"}));
  }

  json Build(json doc) const {
    if (!doc.is_object()) throw UsageError("run config must be a JSON object");
    if (!data.empty()) {
      doc.erase("synth");
      doc["data"] = data;
    }
    if (!synth.empty()) {
      doc.erase("data");
      doc["synth"] = JsonArg(synth, "synth spec");
    }
    if (!target.empty()) doc["target"] = target;
    if (!method.empty()) doc["method"] = method;
    if (!split.empty()) {
      std::vector<double> parts;
      std::stringstream ss(split);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          parts.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw UsageError("bad --split value '" + split + "'");
        }
      }
      doc["split"] = parts;
    }
    if (seed) doc["seed"] = *seed;
    if (epochs) doc["epochs"] = *epochs;
    if (batch_size) doc["batch_size"] = *batch_size;
    if (!model.empty()) doc["model"] = model;
    if (lr1) doc["lr1"] = *lr1;
    if (lr2) doc["lr2"] = *lr2;
    if (trials) doc["trials"] = *trials;
    if (!operators.empty()) doc["operators"] = JsonArg(operators, "operators");
    if (!ablation.empty()) doc["ablation"] = ablation;
    return doc;
  }

  json Base() const {
    return config.empty() ? json::object() : JsonArg(config, "config");
  }
};

int CmdRun(const RunFlags& flags, std::string out) {
  json doc = flags.Build(flags.Base());
  if (out.empty() && doc.contains("out")) out = doc["out"].get<std::string>();
  if (out.empty()) out = "prepsearch_out";
  ps_result* result = nullptr;
  const ps_status s = ps_run_json(doc.dump().c_str(), &result);
  if (s != PS_OK) return Report(s);
  const ps_status w = ps_result_write(result, out.c_str());
  if (w == PS_OK) std::cout << ps_result_summary(result) << "\n";
  ps_result_free(result);
  return w == PS_OK ? kExitOk : Report(w);
}

int CmdCompare(const RunFlags& flags, const std::vector<std::string>& methods,
               const std::vector<std::string>& configs, const std::string& out) {
  json list = json::array();
  for (const std::string& path : configs) {
    list.push_back(flags.Build(JsonArg(path, "config")));
  }
  for (const std::string& m : methods) {
    json doc = flags.Build(flags.Base());
    doc["method"] = m;
    if (m != "random-search") doc.erase("trials");
    list.push_back(doc);
  }
  char* table = nullptr;
  const ps_status s = ps_compare_json(list.dump().c_str(), &table);
  if (s != PS_OK) return Report(s);
  std::string text(table);
  ps_string_free(table);
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw UsageError("cannot write " + out);
    f << text << "\n";
  }
  return kExitOk;
}

int CmdSynth(const std::string& spec, const std::string& out) {
  const json doc = JsonArg(spec, "synth spec");
  const ps_status s = ps_synth_csv(doc.dump().c_str(), out.c_str());
  return s == PS_OK ? kExitOk : Report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based search for per-feature preprocessing pipelines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ps_version());

  RunFlags run_flags;
  std::string run_out;
  CLI::App* run = app.add_subcommand("run", "run one method");
  run_flags.Register(run, true);
  run->add_option("--out", run_out, "output directory");

  RunFlags cmp_flags;
  std::vector<std::string> cmp_methods, cmp_configs;
  std::string cmp_out;
  CLI::App* cmp = app.add_subcommand("compare", "compare methods on one split");
  cmp_flags.Register(cmp, false);
  cmp->add_option("--methods", cmp_methods, "methods sharing the flags")
      ->delimiter(',');
  cmp->add_option("--configs", cmp_configs, "additional run config files")
      ->delimiter(',');
  cmp->add_option("--out", cmp_out, "output file (default stdout)");

  std::string synth_spec, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic CSV");
  synth->add_option("--synth", synth_spec, "spec (inline JSON or file)")
      ->required();
  synth->add_option("--out", synth_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return CmdRun(run_flags, run_out);
    if (cmp->parsed()) return CmdCompare(cmp_flags, cmp_methods, cmp_configs, cmp_out);
    return CmdSynth(synth_spec, synth_out);
  } catch (const UsageError& e) {
    std::cerr << "prepsearch: " << e.what() << "\n";
    return kExitConfig;
  }
}
