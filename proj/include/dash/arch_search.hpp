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
#include <vector>

#include "dash/autodiff.hpp"
#include "dash/corpus.hpp"
#include "dash/model.hpp"
#include "dash/optim.hpp"

namespace dash {

enum class CandidateSpace { kBinary, kTriState };

// Candidates in cost order FULL, [WINDOW,] LINEAR.
std::vector<OperatorKind> candidates(CandidateSpace space);
std::string to_string(CandidateSpace space);
CandidateSpace parse_candidate_space(std::string_view text);

/// Relative per-layer cost aligned with candidates(space): (1, w/T, 0) or (1, 0).
struct CostVector {
  std::vector<double> c;
};
CostVector cost_vector(CandidateSpace space, int window, int seq_len);
double operator_cost(OperatorKind kind, int window, int seq_len);

/// Architecture logits for layers 1..L-1; layer 0 is held FULL during search
/// and carries no logits.
struct ArchState {
  CandidateSpace space = CandidateSpace::kTriState;
  int layers = 0;
  Tensor alpha;  // [layers - 1, |O|]
  double temperature = 1.0;

  static ArchState uniform(int layers, CandidateSpace space);
  int searchable() const { return layers - 1; }
  std::size_t width() const { return alpha.cols(); }
  // Routing probabilities of searchable layer s (model layer s + 1).
  std::vector<double> probs(int s) const;
  std::vector<std::vector<double>> all_probs() const;
};

std::vector<double> routing_probs(std::span<const double> alpha, double temperature);
// Row-wise softmax(alpha / temperature) on the tape.
ad::NodeId routing_probs(ad::Tape& t, ad::NodeId alpha, double temperature);

inline constexpr double kProbSumTolerance = 1e-9;
// sum_o p_o * Operator_o(h) over the mixture's candidates, all fed the same h.
ad::NodeId soft_mix(Binder& b, const Model& m, int layer, ad::NodeId h, const SoftMix& mix);

// (tau^2 / T) sum_t KL(softmax(z_T,t / tau) || softmax(z_S,t / tau)).
double kl_distill_loss(const Tensor& teacher_logits, const Tensor& student_logits, double tau);
ad::NodeId kl_distill_loss(ad::Tape& t, ad::NodeId teacher_logits, ad::NodeId student_logits, double tau);

// Expected cost sum_l p^(l) . c over searchable layers. `probs` is [L-1, |O|].
double cost_loss(const ArchState& state, const CostVector& cost);
ad::NodeId cost_loss(ad::Tape& t, ad::NodeId probs, const CostVector& cost);

struct SearchLossNodes {
  ad::NodeId kl, cost, total;
};
SearchLossNodes search_loss(ad::Tape& t, ad::NodeId teacher_logits, ad::NodeId student_logits, ad::NodeId probs,
                            const CostVector& cost, double tau, double lambda);

struct SearchConfig {
  double lambda = 0.005;
  double tau = 1.0;
  int micro_steps = 1500;
  int grad_accum = 8;
  int micro_batch = 1;
  int seq_len = 128;
  double lr_alpha = 0.1;
  double weight_decay_alpha = 0.0;
  double t_initial = 1.0;
  double t_final = 0.1;
  int anneal_steps = 1500;
  bool anneal = true;  // false holds T_arch at t_initial
  std::uint64_t seed = 0;
  CandidateSpace space = CandidateSpace::kTriState;

  void validate() const;
};

// Geometric interpolation from t_initial to t_final over anneal_steps, then
// held at t_final.
double anneal_schedule(int step, const SearchConfig& cfg);

struct SearchLogRow {
  int step = 0;  // micro-steps consumed after this update
  double kl = 0.0;
  double cost = 0.0;
  double loss = 0.0;
  double temperature = 1.0;
};

/// Stage-2 routing optimiser. Holds only the logits and their optimizer
/// state; the model is read-only.
class ArchSearch {
 public:
  ArchSearch(const Model& model, SearchConfig cfg);

  // One optimizer step on alpha, averaging gradients over `micro_batches`
  // (grad_accum * micro_batch sequences of length seq_len).
  SearchLogRow step(std::span<const TokenSeq> micro_batches);

  const ArchState& state() const { return state_; }
  ArchState& state() { return state_; }
  const SearchConfig& config() const { return cfg_; }
  int micro_steps_done() const { return micro_done_; }

 private:
  const Model& model_;
  SearchConfig cfg_;
  CostVector cost_;
  ArchState state_;
  AdamW opt_;
  int micro_done_ = 0;
};

// Evaluates the soft student and the search loss on one sequence; gradient
// only with respect to alpha.
struct SearchEval {
  double kl = 0.0, cost = 0.0, loss = 0.0;
  Tensor alpha_grad;
  Tensor student_logits;
};
SearchEval evaluate_search_loss(const Model& model, const ArchState& state, std::span<const int> tokens,
                                const SearchConfig& cfg);

// Per-layer argmax; exact ties go to the cheaper operator. Layer 0 is
// instantiated LINEAR.
HybridArch discretize(const ArchState& state);
HybridArch discretize_probs(const std::vector<std::vector<double>>& probs, CandidateSpace space);

// Layer 0 FULL, searchable layer s routed by row s of `probs` ([L-1, |O|]).
ArchPlan soft_plan(ad::Tape& t, const ArchState& state, ad::NodeId probs);

// n_FULL + (w/T) * n_WINDOW.
double realized_budget(const HybridArch& arch, int window, int seq_len);

inline constexpr double kAmbiguousMargin = 0.2;

struct LayerRouting {
  double entropy = 0.0, top1 = 0.0, margin = 0.0;
};
struct RoutingDiagnostics {
  std::vector<LayerRouting> layers;
  double avg_entropy = 0.0, avg_top1 = 0.0, avg_margin = 0.0;
  int ambiguous = 0;
};
RoutingDiagnostics routing_diagnostics(const std::vector<std::vector<double>>& probs);
RoutingDiagnostics routing_diagnostics(const ArchState& state);

struct SearchResult {
  ArchState state;
  HybridArch arch;
  RoutingDiagnostics diagnostics;
  double budget = 0.0;
  std::vector<SearchLogRow> log;
  std::uint64_t weights_hash_before = 0, weights_hash_after = 0;
};

// Full Stage-2 run on windows sampled from `stream`.
SearchResult run_search(const Model& model, std::span<const int> stream, const SearchConfig& cfg,
                        const std::function<void(const SearchLogRow&)>& on_step = {});

}  // namespace dash
