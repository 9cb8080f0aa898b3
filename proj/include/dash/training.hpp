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
#include <iosfwd>
#include <span>
#include <vector>

#include "dash/corpus.hpp"
#include "dash/model.hpp"
#include "dash/optim.hpp"

namespace dash {

enum class Stage { kTeacher, kAlign, kDistill };

struct TrainConfig {
  Stage stage = Stage::kTeacher;
  int steps = 200;
  int batch = 8;
  int seq_len = 64;
  double lr_main = 3e-3;  // non-attention parameters (all parameters for the teacher)
  double lr_attn = 1e-3;  // attention-operator parameters (softmax and linear mixers)
  double weight_decay = 0.01;
  LrSchedule schedule = LrSchedule::kCosine;
  std::uint64_t seed = 0;
  double tau = 1.0;  // distillation temperature

  void validate() const;
};

// Mean next-token cross-entropy; `window` holds T+1 tokens.
ad::NodeId next_token_loss(Binder& b, const Model& m, std::span<const int> window);

// sum_l (1/T) ||U_teacher^(l) - U_student^(l)||_F^2 over post-mixer states.
// The teacher states enter the tape as constants.
ad::NodeId align_loss(Binder& b, const Model& student, const std::vector<Tensor>& teacher_states,
                      std::span<const int> tokens, const HybridArch& student_arch);
std::vector<Tensor> teacher_post_mixer_states(const Model& teacher, std::span<const int> tokens);

// Output-level KL of a discrete student against fixed teacher logits. A plan
// holding any soft mixture is rejected.
ad::NodeId distill_loss(Binder& b, const Model& student, const Tensor& teacher_logits, std::span<const int> tokens,
                        const ArchPlan& plan, double tau);

struct LossPoint {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Owns the optimizer for one training stage. The student is updated in
/// place; the teacher (ALIGN / DISTILL) is read-only.
class Trainer {
 public:
  Trainer(Model& student, const Model* teacher, HybridArch arch, TrainConfig cfg);

  // One optimizer step over `batch` (windows of seq_len, +1 for TEACHER).
  // Returns the mean loss.
  double step(std::span<const TokenSeq> batch);
  int steps_done() const { return done_; }
  double current_lr(double base) const;

 private:
  double lr_for(ParamKey key) const;

  Model& student_;
  const Model* teacher_;
  HybridArch arch_;
  TrainConfig cfg_;
  AdamW opt_;
  int done_ = 0;
};

// Single-step entry points for each stage.
double teacher_step(Trainer& trainer, std::span<const TokenSeq> batch);
double stage1_align_step(Trainer& trainer, std::span<const TokenSeq> batch);
double stage3_distill_step(Trainer& trainer, std::span<const TokenSeq> batch);

struct TrainResult {
  std::vector<LossPoint> curve;
};

// Runs cfg.steps optimizer steps on windows sampled from `stream`.
TrainResult run_training(Model& student, const Model* teacher, const HybridArch& arch, const TrainConfig& cfg,
                         std::span<const int> stream, const std::function<void(const LossPoint&)>& on_step = {});

// Trains a FULL-attention teacher from scratch.
Model train_teacher(const ModelSpec& spec, const TrainConfig& cfg, std::span<const int> stream,
                    std::uint64_t init_seed, std::vector<LossPoint>* curve = nullptr);

// Mean next-token loss over fixed windows of T+1 tokens.
double heldout_next_token_loss(const Model& m, std::span<const TokenSeq> windows);

// CSV with header `step,loss,lr`.
void write_loss_curve(std::ostream& os, const std::vector<LossPoint>& curve);

}  // namespace dash
