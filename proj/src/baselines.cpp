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

#include "dash/baselines.hpp"

#include <cmath>
#include <limits>

#include "dash/error.hpp"
#include "dash/evaluation.hpp"

namespace dash {
namespace {

void check_budget(int layers, int budget, int lo) {
  if (budget < lo || budget > layers) {
    fail(ErrorCode::kInvalidArgument, "budget " + std::to_string(budget) + " outside [" + std::to_string(lo) + ", " +
                                          std::to_string(layers) + "]");
  }
}

// Greedy loop shared by both directions: flip `from` layers to `to` until
// `flips` flips are done, choosing the lowest-KL flip each time. Ties go to
// the lower layer index.
SelectorResult greedy(const Model& teacher, const Model& candidates, OperatorKind from, OperatorKind to, int flips,
                      int budget, std::span<const TokenSeq> heldout) {
  const int L = candidates.spec().layers;
  SelectorResult res;
  res.arch = HybridArch::all(L, from);
  res.budget = budget;
  for (int f = 0; f < flips; ++f) {
    std::vector<double> scores(static_cast<std::size_t>(L), std::numeric_limits<double>::quiet_NaN());
    int best = -1;
    for (int l = 0; l < L; ++l) {
      if (res.arch.ops[static_cast<std::size_t>(l)] != from) continue;
      HybridArch trial = res.arch;
      trial.ops[static_cast<std::size_t>(l)] = to;
      scores[static_cast<std::size_t>(l)] = eval_heldout_kl(candidates, trial, teacher, heldout);
      if (best < 0 || scores[static_cast<std::size_t>(l)] < scores[static_cast<std::size_t>(best)]) best = l;
    }
    res.arch.ops[static_cast<std::size_t>(best)] = to;
    res.score_trace.push_back(std::move(scores));
  }
  return res;
}

}  // namespace

HybridArch uniform_alloc(int layers, int budget) {
  check_budget(layers, budget, 1);
  HybridArch arch = HybridArch::all(layers, OperatorKind::kLinear);
  for (int i = 0; i < budget; ++i) {
    // Integer form of floor((i + 0.5) * L / B).
    const int idx = ((2 * i + 1) * layers) / (2 * budget);
    arch.ops[static_cast<std::size_t>(idx)] = OperatorKind::kFull;
  }
  return arch;
}

SelectorResult greedy_add_select(const Model& teacher, const Model& candidates, int budget,
                                 std::span<const TokenSeq> heldout) {
  const int L = candidates.spec().layers;
  check_budget(L, budget, 0);
  return greedy(teacher, candidates, OperatorKind::kLinear, OperatorKind::kFull, budget, budget, heldout);
}

SelectorResult greedy_remove_select(const Model& teacher, const Model& candidates, int budget,
                                    std::span<const TokenSeq> heldout) {
  const int L = candidates.spec().layers;
  check_budget(L, budget, 0);
  return greedy(teacher, candidates, OperatorKind::kFull, OperatorKind::kLinear, L - budget, budget, heldout);
}

}  // namespace dash
