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
#include <vector>

#include "dash/arch_search.hpp"
#include "dash/model.hpp"

namespace dash {

/// One Stage-2 run of a lambda sweep.
struct SweepRecord {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double budget = 0.0;
  double avg_entropy = 0.0, avg_top1 = 0.0, avg_margin = 0.0;
  int ambiguous = 0;
  HybridArch arch;
  double heldout_kl = 0.0;
};

// `lambda,seed,budget,avg_entropy,avg_top1,avg_margin,ambiguous,heldout_kl`.
std::string sweep_csv(const std::vector<SweepRecord>& records);
// sweep.csv columns plus `arch,error`, enough to rebuild the records.
std::string sweep_runs_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_sweep_runs_csv(const std::string& text);

struct LabeledArch {
  std::string label;
  HybridArch arch;
};

// One row per architecture, one cell per layer, labelled with its realized budget.
std::string allocation_strip_svg(const std::vector<LabeledArch>& archs, int window, int seq_len);
// Median realized budget (bars) and median held-out KL (line) per lambda.
std::string budget_kl_svg(const std::vector<SweepRecord>& records);
// `lambda,median_budget,median_heldout_kl,runs` per distinct lambda.
std::string lambda_summary_csv(const std::vector<SweepRecord>& records);

struct ReportFiles {
  std::string summary_csv, strip_svg, chart_svg;
  bool empty = false;
};
// Writes the report into `dir`. An empty record list writes an explicit
// notice instead of charts and sets `empty`.
ReportFiles emit_report(const std::vector<SweepRecord>& records, const std::vector<LabeledArch>& extra_archs,
                        int window, int seq_len, const std::string& dir);

double median(std::vector<double> v);

}  // namespace dash
