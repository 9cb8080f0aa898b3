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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dash/config.hpp"
#include "dash/report.hpp"

namespace dash {

// Independent stream for (base, tag).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

// Binary token file: "DASHTOK1", u32 vocab, u64 count, u16 LE tokens.
void write_corpus(const std::string& path, std::span<const int> tokens, int vocab);
TokenSeq read_corpus(const std::string& path, int* vocab = nullptr);

// Fixed evaluation windows drawn from the held-out split.
std::vector<TokenSeq> heldout_windows(std::span<const int> heldout, int count, int seq_len, std::uint64_t seed);

// DASH_THREADS when set, else the hardware concurrency.
int worker_threads();

// One search (and optional distillation) at (lambda, seed). Failures are
// captured in the record rather than thrown.
SweepRecord run_sweep_point(const Model& aligned, std::span<const int> train, std::span<const TokenSeq> heldout,
                            const RunConfig& cfg, double lambda, std::uint64_t seed);

// Records come back in grid order (lambda-major) regardless of threading.
std::vector<SweepRecord> run_sweep(const Model& aligned, std::span<const int> train,
                                   std::span<const TokenSeq> heldout, const RunConfig& cfg, int threads,
                                   const std::function<void(const SweepRecord&)>& on_done = {});

struct BudgetMatch {
  SearchResult result;
  double lambda = 0.0;
  int searches = 0;
  // The search at `lambda` did not land on the target; the arch keeps the
  // top-k layers by final p_FULL instead.
  bool projected = false;
};

// Bisects lambda in log space until the discretized arch has exactly
// `n_full` FULL layers.
BudgetMatch search_at_budget(const Model& model, std::span<const int> stream, SearchConfig cfg, int n_full,
                             double lambda_lo = 1e-4, double lambda_hi = 1.0, int max_searches = 10);

/// File-level stages. Each reads its inputs from and writes its outputs to
/// cfg.out_dir.
namespace stages {
void gen_corpus(const RunConfig& cfg);
void train_teacher(const RunConfig& cfg);
void align(const RunConfig& cfg);
void search(const RunConfig& cfg);
// Returns false when any grid point failed.
bool sweep(const RunConfig& cfg);
void distill(const RunConfig& cfg);
void eval(const RunConfig& cfg);
void report(const RunConfig& cfg);

const std::vector<std::string>& names();
// Dispatches by name; returns false for a sweep with failed points.
bool run(std::string_view name, const RunConfig& cfg);
}  // namespace stages

}  // namespace dash
