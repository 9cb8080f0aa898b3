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

#include <span>
#include <vector>

#include "dash/corpus.hpp"
#include "dash/model.hpp"

namespace dash {

struct SelectorResult {
  HybridArch arch;
  // One row per greedy step: the held-out KL of every single-layer flip,
  // NaN where the layer was not eligible.
  std::vector<std::vector<double>> score_trace;
  int budget = 0;
};

// FULL at floor((i + 0.5) * L / B) for i in [0, B), LINEAR elsewhere.
HybridArch uniform_alloc(int layers, int budget);

// Starts all-LINEAR and repeatedly flips to FULL the layer whose flip gives
// the lowest held-out KL. `candidates` carries the teacher attention weights
// and the aligned linear modules; flips are not retrained.
SelectorResult greedy_add_select(const Model& teacher, const Model& candidates, int budget,
                                 std::span<const TokenSeq> heldout);

// Starts all-FULL and repeatedly flips to LINEAR the layer whose flip gives
// the lowest held-out KL.
SelectorResult greedy_remove_select(const Model& teacher, const Model& candidates, int budget,
                                    std::span<const TokenSeq> heldout);

}  // namespace dash
