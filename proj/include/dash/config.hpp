// Copyright 2026 The DASH Search Authors.
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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dash/arch_search.hpp"
#include "dash/corpus.hpp"
#include "dash/evaluation.hpp"
#include "dash/model.hpp"
#include "dash/training.hpp"

namespace dash {

struct SweepConfig {
  std::vector<double> lambdas{0.001, 0.005, 0.02, 0.1};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int distill_steps = 0;  // 0 evaluates the undistilled instantiation
};

struct EvalConfig {
  int heldout_windows = 16;
  int seq_len = 128;
  RecallTaskSpec recall;
};

/// Everything a pipeline run needs. Serialised as INI text: `[section]`
/// headers followed by `key = value` lines; `#` and `;` start comments.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "dash_out";

  ModelSpec model;
  CorpusSpec corpus;
  std::size_t corpus_tokens = 2'000'000;
  double heldout_fraction = 0.1;

  TrainConfig teacher;
  TrainConfig align;
  SearchConfig search;
  SweepConfig sweep;
  TrainConfig distill;
  EvalConfig eval;

  RunConfig();

  // Unknown sections or keys are rejected.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);

  // Sets one `section.key` from its text form.
  void set(std::string_view dotted_key, std::string_view value);
  std::string to_ini() const;
  void validate() const;

  // Every documented `section.key`.
  static std::vector<std::string> keys();
};

}  // namespace dash
