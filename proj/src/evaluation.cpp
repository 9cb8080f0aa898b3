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

#include "dash/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dash/arch_search.hpp"
#include "dash/error.hpp"

namespace dash {
namespace {

HybridArch teacher_arch(const Model& teacher) { return HybridArch::all(teacher.spec().layers, OperatorKind::kFull); }

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  const std::size_t C = logits.cols();
  const double* row = &logits.data[r * C];
  return static_cast<std::size_t>(std::max_element(row, row + C) - row);
}

}  // namespace

double eval_heldout_kl(const Model& student, const HybridArch& arch, const Model& teacher,
                       std::span<const TokenSeq> heldout) {
  if (heldout.empty()) fail(ErrorCode::kInvalidArgument, "eval_heldout_kl: no held-out windows");
  double total = 0.0;
  for (const auto& seq : heldout) {
    const auto zt = forward_logits(teacher, seq, teacher_arch(teacher));
    const auto zs = forward_logits(student, seq, arch);
    total += kl_distill_loss(zt, zs, 1.0);
  }
  return std::max(0.0, total / static_cast<double>(heldout.size()));
}

double eval_agreement(const Model& student, const HybridArch& arch, const Model& teacher,
                      std::span<const TokenSeq> heldout) {
  if (heldout.empty()) fail(ErrorCode::kInvalidArgument, "eval_agreement: no held-out windows");
  std::size_t hit = 0, total = 0;
  for (const auto& seq : heldout) {
    const auto zt = forward_logits(teacher, seq, teacher_arch(teacher));
    const auto zs = forward_logits(student, seq, arch);
    for (std::size_t r = 0; r < zt.rows(); ++r) hit += argmax_row(zt, r) == argmax_row(zs, r);
    total += zt.rows();
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

Predictor greedy_predictor(const Model& m, const HybridArch& arch) {
  return [&m, arch](std::span<const int> context) {
    const auto ctx = context.size() > static_cast<std::size_t>(m.spec().max_seq)
                         ? context.last(static_cast<std::size_t>(m.spec().max_seq))
                         : context;
    const auto z = forward_logits(m, ctx, arch);
    return static_cast<int>(argmax_row(z, z.rows() - 1));
  };
}

double eval_recall_task(const Predictor& predict, const CorpusSpec& corpus, const RecallTaskSpec& task) {
  if (task.trials < 1) fail(ErrorCode::kInvalidArgument, "eval_recall_task: trials must be >= 1");
  CorpusGenerator gen(corpus, task.seed);
  int correct = 0;
  for (int i = 0; i < task.trials; ++i) {
    const auto probe = gen.recall_probe(task.pairs, task.gap);
    correct += predict(probe.tokens) == probe.answer;
  }
  return static_cast<double>(correct) / static_cast<double>(task.trials);
}

EvalReport evaluate_model(const Model& student, const HybridArch& arch, const Model& teacher,
                          std::span<const TokenSeq> heldout, const CorpusSpec& corpus, const RecallTaskSpec& task,
                          int budget_seq_len) {
  EvalReport r;
  r.heldout_kl = eval_heldout_kl(student, arch, teacher, heldout);
  r.agreement = eval_agreement(student, arch, teacher, heldout);
  r.recall_accuracy = eval_recall_task(greedy_predictor(student, arch), corpus, task);
  r.budget = realized_budget(arch, student.spec().window, budget_seq_len);
  r.n_full = arch.count(OperatorKind::kFull);
  r.n_window = arch.count(OperatorKind::kWindow);
  r.n_linear = arch.count(OperatorKind::kLinear);
  r.arch = arch.to_string();
  return r;
}

std::string eval_csv_header() { return "heldout_kl,agreement,recall_accuracy,budget,n_full,n_window,n_linear,arch"; }

std::string eval_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.10g,%.6f,%.6f,%.6g,%d,%d,%d,", r.heldout_kl, r.agreement, r.recall_accuracy,
                r.budget, r.n_full, r.n_window, r.n_linear);
  return std::string(buf) + r.arch;
}

std::string eval_text(const EvalReport& r) {
  std::ostringstream os;
  os << "architecture      " << r.arch << '\n'
     << "operators         FULL=" << r.n_full << " WINDOW=" << r.n_window << " LINEAR=" << r.n_linear << '\n'
     << "realized budget   " << r.budget << '\n'
     << "held-out KL       " << r.heldout_kl << '\n'
     << "agreement         " << r.agreement << '\n'
     << "recall accuracy   " << r.recall_accuracy << '\n';
  return os.str();
}

}  // namespace dash
