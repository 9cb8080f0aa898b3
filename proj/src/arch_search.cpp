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

#include "dash/arch_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dash/error.hpp"

namespace dash {
namespace {

constexpr ParamKey kAlphaKey = std::numeric_limits<ParamKey>::max();

}  // namespace

std::vector<OperatorKind> candidates(CandidateSpace space) {
  if (space == CandidateSpace::kBinary) return {OperatorKind::kFull, OperatorKind::kLinear};
  return {OperatorKind::kFull, OperatorKind::kWindow, OperatorKind::kLinear};
}

std::string to_string(CandidateSpace space) { return space == CandidateSpace::kBinary ? "binary" : "tri"; }

CandidateSpace parse_candidate_space(std::string_view text) {
  if (text == "binary") return CandidateSpace::kBinary;
  if (text == "tri" || text == "tri-state") return CandidateSpace::kTriState;
  fail(ErrorCode::kConfig, "unknown candidate space '" + std::string(text) + "' (expected binary or tri)");
}

double operator_cost(OperatorKind kind, int window, int seq_len) {
  switch (kind) {
    case OperatorKind::kFull: return 1.0;
    case OperatorKind::kWindow: return static_cast<double>(window) / static_cast<double>(seq_len);
    case OperatorKind::kLinear: return 0.0;
  }
  return 0.0;
}

CostVector cost_vector(CandidateSpace space, int window, int seq_len) {
  if (window < 1 || seq_len < 1) fail(ErrorCode::kInvalidArgument, "cost_vector: window and seq_len must be >= 1");
  CostVector cv;
  for (auto k : candidates(space)) cv.c.push_back(std::min(1.0, operator_cost(k, window, seq_len)));
  return cv;
}

// ---- state / routing -----------------------------------------------------------

ArchState ArchState::uniform(int layers, CandidateSpace space) {
  if (layers < 2) fail(ErrorCode::kInvalidArgument, "ArchState: need at least 2 layers");
  ArchState s;
  s.space = space;
  s.layers = layers;
  s.alpha = Tensor({static_cast<std::size_t>(layers - 1), candidates(space).size()});
  return s;
}

std::vector<double> ArchState::probs(int s) const {
  const std::size_t K = width();
  return routing_probs(std::span<const double>(alpha.data.data() + static_cast<std::size_t>(s) * K, K), temperature);
}

std::vector<std::vector<double>> ArchState::all_probs() const {
  std::vector<std::vector<double>> out;
  for (int s = 0; s < searchable(); ++s) out.push_back(probs(s));
  return out;
}

std::vector<double> routing_probs(std::span<const double> alpha, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorCode::kInvalidArgument, "routing_probs: temperature must be positive");
  // Mirrors scale() followed by softmax() on the tape, bit for bit.
  const double inv = 1.0 / temperature;
  std::vector<double> z(alpha.size());
  double m = -INFINITY;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = alpha[i] * inv;
    m = std::max(m, z[i]);
  }
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
  return z;
}

ad::NodeId routing_probs(ad::Tape& t, ad::NodeId alpha, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorCode::kInvalidArgument, "routing_probs: temperature must be positive");
  return ad::softmax(t, ad::scale(t, alpha, 1.0 / temperature));
}

ad::NodeId soft_mix(Binder& b, const Model& m, int layer, ad::NodeId h, const SoftMix& mix) {
  auto& t = b.tape();
  const Tensor& p = t.value(mix.probs);
  if (p.size() != mix.candidates.size() || mix.candidates.empty()) {
    fail(ErrorCode::kShape, "soft_mix: " + std::to_string(p.size()) + " probabilities for " +
                                std::to_string(mix.candidates.size()) + " candidates");
  }
  double total = 0.0;
  for (double v : p.data) total += v;
  if (std::abs(total - 1.0) > kProbSumTolerance) {
    fail(ErrorCode::kInvalidArgument, "soft_mix: routing probabilities sum to " + std::to_string(total));
  }
  ad::NodeId out{};
  for (std::size_t i = 0; i < mix.candidates.size(); ++i) {
    const auto term = ad::mul_scalar(t, apply_operator(b, m, layer, h, mix.candidates[i]), ad::index(t, mix.probs, i));
    out = i == 0 ? term : ad::add(t, out, term);
  }
  return out;
}

// ---- losses -----------------------------------------------------------------

double kl_distill_loss(const Tensor& teacher_logits, const Tensor& student_logits, double tau) {
  ad::Tape t;
  const auto a = t.constant(teacher_logits);
  const auto s = t.constant(student_logits);
  return t.value(ad::kl_rows(t, a, s, tau))[0];
}

ad::NodeId kl_distill_loss(ad::Tape& t, ad::NodeId teacher_logits, ad::NodeId student_logits, double tau) {
  return ad::kl_rows(t, teacher_logits, student_logits, tau);
}

double cost_loss(const ArchState& state, const CostVector& cost) {
  double total = 0.0;
  for (const auto& p : state.all_probs())
    for (std::size_t i = 0; i < p.size(); ++i) total += p[i] * cost.c.at(i);
  return total;
}

ad::NodeId cost_loss(ad::Tape& t, ad::NodeId probs, const CostVector& cost) {
  const Tensor& P = t.value(probs);
  if (P.cols() != cost.c.size()) {
    fail(ErrorCode::kShape, "cost_loss: probabilities " + shape_str(P.shape) + " vs cost vector of " +
                                std::to_string(cost.c.size()));
  }
  Tensor tiled(P.shape);
  for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = cost.c[i % cost.c.size()];
  return ad::sum(t, ad::mul(t, probs, t.constant(std::move(tiled))));
}

SearchLossNodes search_loss(ad::Tape& t, ad::NodeId teacher_logits, ad::NodeId student_logits, ad::NodeId probs,
                            const CostVector& cost, double tau, double lambda) {
  SearchLossNodes n;
  n.kl = kl_distill_loss(t, teacher_logits, student_logits, tau);
  n.cost = cost_loss(t, probs, cost);
  n.total = ad::add(t, n.kl, ad::scale(t, n.cost, lambda));
  return n;
}

// ---- config / schedule ----------------------------------------------------------

void SearchConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "search: " + m); };
  if (!(lambda >= 0.0)) bad("lambda must be >= 0");
  if (!(tau > 0.0)) bad("tau must be > 0");
  if (micro_steps < 1 || grad_accum < 1 || micro_batch < 1) bad("micro_steps, grad_accum and micro_batch must be >= 1");
  if (seq_len < 1) bad("seq_len must be >= 1");
  if (!(lr_alpha > 0.0)) bad("lr_alpha must be > 0");
  if (!(t_final > 0.0) || !(t_initial >= t_final)) bad("need t_initial >= t_final > 0");
  if (anneal_steps < 1) bad("anneal_steps must be >= 1");
}

double anneal_schedule(int step, const SearchConfig& cfg) {
  if (!cfg.anneal) return cfg.t_initial;
  if (step <= 0) return cfg.t_initial;
  if (step >= cfg.anneal_steps) return cfg.t_final;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.anneal_steps);
  return cfg.t_initial * std::pow(cfg.t_final / cfg.t_initial, frac);
}

// ---- search -------------------------------------------------------------------

ArchPlan soft_plan(ad::Tape& t, const ArchState& state, ad::NodeId probs) {
  ArchPlan plan;
  plan.emplace_back(OperatorKind::kFull);
  const auto cands = candidates(state.space);
  for (int s = 0; s < state.searchable(); ++s) {
    plan.emplace_back(SoftMix{ad::slice_rows(t, probs, static_cast<std::size_t>(s), 1), cands});
  }
  return plan;
}

SearchEval evaluate_search_loss(const Model& model, const ArchState& state, std::span<const int> tokens,
                                const SearchConfig& cfg) {
  const auto& spec = model.spec();
  if (state.layers != spec.layers) fail(ErrorCode::kInvalidArgument, "search: state/model layer count mismatch");
  ad::Tape t;
  Binder b(t, model.params(), Trainable::kNone);
  const auto teacher = model_forward(b, model, tokens, plan_of(HybridArch::all(spec.layers, OperatorKind::kFull)));
  const auto alpha = t.leaf(state.alpha, kAlphaKey, true);
  const auto probs = routing_probs(t, alpha, state.temperature);
  const auto student = model_forward(b, model, tokens, soft_plan(t, state, probs));
  const auto cost = cost_vector(state.space, spec.window, cfg.seq_len);
  const auto loss = search_loss(t, teacher.logits, student.logits, probs, cost, cfg.tau, cfg.lambda);
  auto grads = t.backward(loss.total);
  for (const auto& [key, g] : grads) {
    if (key == kAlphaKey) continue;
    if (std::any_of(g.data.begin(), g.data.end(), [](double v) { return v != 0.0; })) {
      fail(ErrorCode::kFreezeViolation, "search: nonzero gradient on model weight '" + model.params().name(key) + "'");
    }
  }
  SearchEval ev;
  ev.kl = t.value(loss.kl)[0];
  ev.cost = t.value(loss.cost)[0];
  ev.loss = t.value(loss.total)[0];
  ev.alpha_grad = std::move(grads.at(kAlphaKey));
  ev.student_logits = t.value(student.logits);
  return ev;
}

ArchSearch::ArchSearch(const Model& model, SearchConfig cfg)
    : model_(model),
      cfg_(cfg),
      cost_(cost_vector(cfg.space, model.spec().window, cfg.seq_len)),
      state_(ArchState::uniform(model.spec().layers, cfg.space)) {
  cfg_.validate();
  state_.temperature = anneal_schedule(0, cfg_);
}

SearchLogRow ArchSearch::step(std::span<const TokenSeq> micro_batches) {
  const auto per_micro = static_cast<std::size_t>(cfg_.micro_batch);
  if (micro_batches.empty() || micro_batches.size() % per_micro != 0) {
    fail(ErrorCode::kInvalidArgument, "search step: batch size must be a multiple of micro_batch");
  }
  Tensor grad(state_.alpha.shape);
  SearchLogRow row;
  const double n = static_cast<double>(micro_batches.size());
  for (std::size_t i = 0; i < micro_batches.size(); ++i) {
    state_.temperature = anneal_schedule(micro_done_ + static_cast<int>(i / per_micro), cfg_);
    const auto ev = evaluate_search_loss(model_, state_, micro_batches[i], cfg_);
    if (!std::isfinite(ev.loss)) fail(ErrorCode::kNumeric, "search: non-finite loss");
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += ev.alpha_grad[j] / n;
    row.kl += ev.kl / n;
    row.cost += ev.cost / n;
    row.loss += ev.loss / n;
  }
  row.temperature = state_.temperature;
  opt_.begin_step();
  opt_.update(0, state_.alpha, grad, cfg_.lr_alpha, cfg_.weight_decay_alpha);
  micro_done_ += static_cast<int>(micro_batches.size() / per_micro);
  state_.temperature = anneal_schedule(micro_done_, cfg_);
  row.step = micro_done_;
  return row;
}

HybridArch discretize_probs(const std::vector<std::vector<double>>& probs, CandidateSpace space) {
  const auto cands = candidates(space);
  HybridArch arch;
  arch.ops.push_back(OperatorKind::kLinear);
  for (const auto& p : probs) {
    if (p.size() != cands.size()) fail(ErrorCode::kShape, "discretize: probability width mismatch");
    // Scan cheapest first so exact ties keep the cheaper operator.
    std::size_t best = cands.size() - 1;
    for (std::size_t i = cands.size() - 1; i-- > 0;) {
      if (p[i] > p[best]) best = i;
    }
    arch.ops.push_back(cands[best]);
  }
  return arch;
}

HybridArch discretize(const ArchState& state) { return discretize_probs(state.all_probs(), state.space); }

double realized_budget(const HybridArch& arch, int window, int seq_len) {
  return static_cast<double>(arch.count(OperatorKind::kFull)) +
         operator_cost(OperatorKind::kWindow, window, seq_len) * static_cast<double>(arch.count(OperatorKind::kWindow));
}

RoutingDiagnostics routing_diagnostics(const std::vector<std::vector<double>>& probs) {
  RoutingDiagnostics d;
  for (const auto& p : probs) {
    LayerRouting lr;
    for (double v : p)
      if (v > 0.0) lr.entropy -= v * std::log(v);
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    lr.top1 = sorted.at(0);
    lr.margin = sorted.size() > 1 ? sorted[0] - sorted[1] : 1.0;
    d.layers.push_back(lr);
    d.avg_entropy += lr.entropy;
    d.avg_top1 += lr.top1;
    d.avg_margin += lr.margin;
    d.ambiguous += lr.margin < kAmbiguousMargin;
  }
  if (!probs.empty()) {
    const double n = static_cast<double>(probs.size());
    d.avg_entropy /= n;
    d.avg_top1 /= n;
    d.avg_margin /= n;
  }
  return d;
}

RoutingDiagnostics routing_diagnostics(const ArchState& state) { return routing_diagnostics(state.all_probs()); }

SearchResult run_search(const Model& model, std::span<const int> stream, const SearchConfig& cfg,
                        const std::function<void(const SearchLogRow&)>& on_step) {
  cfg.validate();
  if (cfg.seq_len > model.spec().max_seq) fail(ErrorCode::kConfig, "search: seq_len exceeds model max_seq");
  SearchResult res;
  res.weights_hash_before = model.params().hash();
  ArchSearch search(model, cfg);
  WindowSampler sampler(stream, static_cast<std::size_t>(cfg.seq_len), cfg.seed);
  while (search.micro_steps_done() < cfg.micro_steps) {
    const int remaining = cfg.micro_steps - search.micro_steps_done();
    const int micro = std::min(cfg.grad_accum, remaining);
    const auto batch = sampler.batch(static_cast<std::size_t>(micro * cfg.micro_batch));
    const auto row = search.step(batch);
    res.log.push_back(row);
    if (on_step) on_step(row);
  }
  res.state = search.state();
  res.arch = discretize(res.state);
  res.diagnostics = routing_diagnostics(res.state);
  res.budget = realized_budget(res.arch, model.spec().window, cfg.seq_len);
  res.weights_hash_after = model.params().hash();
  if (res.weights_hash_after != res.weights_hash_before) {
    fail(ErrorCode::kFreezeViolation, "search: model weights changed during Stage-2");
  }
  return res;
}

}  // namespace dash
