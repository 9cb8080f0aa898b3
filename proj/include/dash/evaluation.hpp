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

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dash/corpus.hpp"
#include "dash/model.hpp"

namespace dash {

// Mean output-level KL (tau = 1) of `arch` over held-out windows, against the
// all-FULL teacher.
double eval_heldout_kl(const Model& student, const HybridArch& arch, const Model& teacher,
                       std::span<const TokenSeq> heldout);

// Fraction of positions whose argmax matches the teacher's argmax.
double eval_agreement(const Model& student, const HybridArch& arch, const Model& teacher,
                      std::span<const TokenSeq> heldout);

// Maps a context to the greedily decoded next token.
using Predictor = std::function<int(std::span<const int> context)>;
Predictor greedy_predictor(const Model& m, const HybridArch& arch);

struct RecallTaskSpec {
  int pairs = 4;
  int gap = 20;  // filler tokens between the last pair and the query
  int trials = 200;
  std::uint64_t seed = 1234;
};

// Exact-match accuracy on key-value recall probes drawn from `corpus`.
double eval_recall_task(const Predictor& predict, const CorpusSpec& corpus, const RecallTaskSpec& task);

struct EvalReport {
  double heldout_kl = 0.0;
  double agreement = 0.0;
  double recall_accuracy = 0.0;
  double budget = 0.0;
  int n_full = 0, n_window = 0, n_linear = 0;
  std::string arch;
};

EvalReport evaluate_model(const Model& student, const HybridArch& arch, const Model& teacher,
                          std::span<const TokenSeq> heldout, const CorpusSpec& corpus, const RecallTaskSpec& task,
                          int budget_seq_len);

std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& r);
std::string eval_text(const EvalReport& r);

}  // namespace dash
