// Copyright (c) 2026 The pclprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat `section.key = value` run configuration. Parsing never throws: it
// yields either a validated config or every problem found, each tagged with
// where it came from.

#pragma once

#include "pclprompt/backbone.hpp"
#include "pclprompt/data.hpp"
#include "pclprompt/prompting.hpp"
#include "pclprompt/training.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pclprompt {

struct RunConfig {
  struct Run {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = "runs";
    std::string backbone;  // "" = <output_dir>/backbone.ckpt
    std::string tunables;  // "" = <output_dir>/tunables.ckpt
    bool operator==(const Run&) const = default;
  } run;

  BackboneConfig model;
  StrategyConfig strategy;
  HeadConfig head;  // classes follows data.classes

  DatasetSpec data;
  std::string data_dir = "data";

  PretrainConfig pretrain;
  std::string pretrain_subset = "clean";  // "clean" or "all" training clouds

  TuneConfig tune;

  struct Eval {
    std::size_t votes = 1;
    AugmentSpec augment{true, true};
    std::string split = "test";
    bool operator==(const Eval&) const = default;
  } eval;

  FewShotConfig fewshot;

  struct Export {
    std::string tap = "output_N";  // or "input_N"
    std::string split = "test";
    std::string path;  // "" = <output_dir>/embeddings.csv
    bool operator==(const Export&) const = default;
  } export_;

  bool operator==(const RunConfig&) const = default;

  // Stage configs with the run-wide seed and thread count applied.
  TuneConfig tune_config() const;
  PretrainConfig pretrain_config() const;
  FewShotConfig fewshot_config() const;
  HeadConfig head_config() const;
  std::string backbone_path() const;
  std::string tunables_path() const;
};

struct ConfigError {
  std::string source;  // "<name>:<line>" or "--set <n>"; empty for whole-config checks
  std::string message;
  std::string str() const { return source.empty() ? message : source + ": " + message; }
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<ConfigError> errors;
  bool ok() const { return config.has_value(); }
};

// `name` labels error sources. Overrides are `section.key=value` strings
// applied after the text.
ConfigResult parse_config(const std::string& text, const std::string& name = "config",
                          const std::vector<std::string>& overrides = {});

// Every key with its current value; parse_config(render(c)) reproduces c.
std::string render_config(const RunConfig& config);

// All recognised keys, in render order.
std::vector<std::string> config_keys();

}  // namespace pclprompt
