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

#include "dash/training.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "dash/error.hpp"

namespace dash {

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "train: " + m); };
  if (steps < 0) bad("steps must be >= 0");
  if (batch < 1) bad("batch must be >= 1");
  if (seq_len < 1) bad("seq_len must be >= 1");
  if (!(lr_main > 0.0) || !(lr_attn > 0.0)) bad("learning rates must be > 0");
  if (weight_decay < 0.0) bad("weight_decay must be >= 0");
  if (!(tau > 0.0)) bad("tau must be > 0");
}

ad::NodeId next_token_loss(Binder& b, const Model& m, std::span<const int> window) {
  if (window.size() < 2) fail(ErrorCode::kInvalidArgument, "next_token_loss: need at least 2 tokens");
  auto& t = b.tape();
  const auto inputs = window.first(window.size() - 1);
  const auto fwd = model_forward(b, m, inputs, plan_of(HybridArch::all(m.spec().layers, OperatorKind::kFull)));
  const std::size_t T = inputs.size(), V = static_cast<std::size_t>(m.spec().vocab);
  Tensor onehot({T, V});
  for (std::size_t i = 0; i < T; ++i) onehot.at(i, static_cast<std::size_t>(window[i + 1])) = 1.0;
  const auto picked = ad::sum(t, ad::mul(t, ad::log_softmax(t, fwd.logits), t.constant(std::move(onehot))));
  return ad::scale(t, picked, -1.0 / static_cast<double>(T));
}

std::vector<Tensor> teacher_post_mixer_states(const Model& teacher, std::span<const int> tokens) {
  ad::Tape t;
  Binder b(t, teacher.params(), Trainable::kNone);
  const auto fwd = model_forward(b, teacher, tokens, plan_of(HybridArch::all(teacher.spec().layers, OperatorKind::kFull)));
  std::vector<Tensor> out;
  for (auto id : fwd.post_mixer) out.push_back(t.value(id));
  return out;
}

ad::NodeId align_loss(Binder& b, const Model& student, const std::vector<Tensor>& teacher_states,
                      std::span<const int> tokens, const HybridArch& student_arch) {
  auto& t = b.tape();
  const auto fwd = model_forward(b, student, tokens, plan_of(student_arch));
  if (teacher_states.size() != fwd.post_mixer.size()) {
    fail(ErrorCode::kInvalidArgument, "align_loss: teacher/student layer count mismatch");
  }
  const double inv_T = 1.0 / static_cast<double>(tokens.size());
  ad::NodeId total{};
  for (std::size_t l = 0; l < fwd.post_mixer.size(); ++l) {
    const auto diff = ad::sub(t, t.constant(teacher_states[l]), fwd.post_mixer[l]);
    const auto term = ad::scale(t, ad::sq_frobenius(t, diff), inv_T);
    total = l == 0 ? term : ad::add(t, total, term);
  }
  return total;
}

ad::NodeId distill_loss(Binder& b, const Model& student, const Tensor& teacher_logits, std::span<const int> tokens,
                        const ArchPlan& plan, double tau) {
  for (const auto& lp : plan) {
    if (std::holds_alternative<SoftMix>(lp)) {
      fail(ErrorCode::kInvalidArgument, "distill: soft mixtures are not allowed in the final student");
    }
  }
  auto& t = b.tape();
  const auto fwd = model_forward(b, student, tokens, plan);
  return ad::kl_rows(t, t.constant(teacher_logits), fwd.logits, tau);
}

// ---- Trainer -------------------------------------------------------------------

Trainer::Trainer(Model& student, const Model* teacher, HybridArch arch, TrainConfig cfg)
    : student_(student), teacher_(teacher), arch_(std::move(arch)), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.stage != Stage::kTeacher && teacher_ == nullptr) {
    fail(ErrorCode::kInvalidArgument, "trainer: ALIGN and DISTILL stages need a teacher");
  }
  if (arch_.layers() != student.spec().layers) fail(ErrorCode::kInvalidArgument, "trainer: arch length mismatch");
}

double Trainer::current_lr(double base) const { return scheduled_lr(cfg_.schedule, base, done_, cfg_.steps); }

double Trainer::lr_for(ParamKey key) const {
  const auto& name = student_.params().name(key);
  switch (cfg_.stage) {
    case Stage::kTeacher: return current_lr(cfg_.lr_main);
    case Stage::kAlign: return current_lr(cfg_.lr_attn);
    case Stage::kDistill: return current_lr(is_attention_operator_param(name) ? cfg_.lr_attn : cfg_.lr_main);
  }
  return 0.0;
}

double Trainer::step(std::span<const TokenSeq> batch) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "trainer: empty batch");
  const Trainable policy = cfg_.stage == Stage::kAlign ? Trainable::kLinearOnly : Trainable::kAll;
  std::map<ParamKey, Tensor> acc;
  double loss_sum = 0.0;
  const double n = static_cast<double>(batch.size());
  for (const auto& seq : batch) {
    ad::Tape t;
    Binder b(t, student_.params(), policy);
    ad::NodeId loss{};
    switch (cfg_.stage) {
      case Stage::kTeacher: loss = next_token_loss(b, student_, seq); break;
      case Stage::kAlign: loss = align_loss(b, student_, teacher_post_mixer_states(*teacher_, seq), seq, arch_); break;
      case Stage::kDistill: {
        const Tensor tl = forward_logits(*teacher_, seq, HybridArch::all(teacher_->spec().layers, OperatorKind::kFull));
        loss = distill_loss(b, student_, tl, seq, plan_of(arch_), cfg_.tau);
        break;
      }
    }
    const double lv = t.value(loss)[0];
    if (!std::isfinite(lv)) {
      fail(ErrorCode::kNumeric, "training diverged: non-finite loss at step " + std::to_string(done_));
    }
    loss_sum += lv;
    for (auto& [key, g] : t.backward(loss)) {
      auto [it, fresh] = acc.try_emplace(key, Tensor(g.shape));
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i] / n;
    }
  }
  opt_.begin_step();
  for (auto& [key, g] : acc) {
    const auto& name = student_.params().name(key);
    if (policy == Trainable::kLinearOnly && !is_linear_param(name)) continue;
    Tensor& p = student_.params().mutable_value(key);
    // Decay matrices only; gains, biases and gate offsets are rank 1.
    const double wd = p.rank() >= 2 ? cfg_.weight_decay : 0.0;
    opt_.update(key, p, g, lr_for(key), wd);
    if (!p.all_finite()) fail(ErrorCode::kNumeric, "training diverged: parameter '" + name + "' became non-finite");
  }
  ++done_;
  return loss_sum / n;
}

double teacher_step(Trainer& trainer, std::span<const TokenSeq> batch) { return trainer.step(batch); }
double stage1_align_step(Trainer& trainer, std::span<const TokenSeq> batch) { return trainer.step(batch); }
double stage3_distill_step(Trainer& trainer, std::span<const TokenSeq> batch) { return trainer.step(batch); }

TrainResult run_training(Model& student, const Model* teacher, const HybridArch& arch, const TrainConfig& cfg,
                         std::span<const int> stream, const std::function<void(const LossPoint&)>& on_step) {
  Trainer trainer(student, teacher, arch, cfg);
  const std::size_t window = static_cast<std::size_t>(cfg.seq_len) + (cfg.stage == Stage::kTeacher ? 1 : 0);
  TrainResult res;
  if (cfg.steps == 0) return res;
  WindowSampler sampler(stream, window, cfg.seed);
  for (int s = 0; s < cfg.steps; ++s) {
    const double base = cfg.stage == Stage::kAlign ? cfg.lr_attn : cfg.lr_main;
    LossPoint pt{s, 0.0, trainer.current_lr(base)};
    const auto batch = sampler.batch(static_cast<std::size_t>(cfg.batch));
    pt.loss = trainer.step(batch);
    res.curve.push_back(pt);
    if (on_step) on_step(pt);
  }
  return res;
}

Model train_teacher(const ModelSpec& spec, const TrainConfig& cfg, std::span<const int> stream,
                    std::uint64_t init_seed, std::vector<LossPoint>* curve) {
  if (cfg.stage != Stage::kTeacher) fail(ErrorCode::kInvalidArgument, "train_teacher: config stage must be TEACHER");
  Model m = Model::init(spec, init_seed);
  auto res = run_training(m, nullptr, HybridArch::all(spec.layers, OperatorKind::kFull), cfg, stream);
  if (curve) *curve = std::move(res.curve);
  return m;
}

double heldout_next_token_loss(const Model& m, std::span<const TokenSeq> windows) {
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "heldout_next_token_loss: no windows");
  double total = 0.0;
  for (const auto& w : windows) {
    ad::Tape t;
    Binder b(t, m.params(), Trainable::kNone);
    total += t.value(next_token_loss(b, m, w))[0];
  }
  return total / static_cast<double>(windows.size());
}

void write_loss_curve(std::ostream& os, const std::vector<LossPoint>& curve) {
  os << "step,loss,lr\n";
  os << std::setprecision(10);
  for (const auto& p : curve) os << p.step << ',' << p.loss << ',' << p.lr << '\n';
}

}  // namespace dash
