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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dash/arch_search.hpp"
#include "dash/error.hpp"
#include "support.hpp"

using namespace dash;
using namespace dash::testing;

namespace {

ArchState state_with(int layers, CandidateSpace space, std::uint64_t seed, double scale = 1.0) {
  ArchState s = ArchState::uniform(layers, space);
  s.alpha = random_tensor(s.alpha.shape, seed, scale);
  return s;
}

Tensor soft_op(const Model& m, int layer, const Tensor& h, std::vector<double> p,
               std::vector<OperatorKind> cands = candidates(CandidateSpace::kTriState)) {
  return run_op(m, h, [&](Binder& b, ad::NodeId x) {
    auto& t = b.tape();
    const auto probs = t.constant(Tensor({p.size()}, p));
    return soft_mix(b, m, layer, x, SoftMix{probs, cands});
  });
}

}  // namespace

TEST_CASE("candidate spaces and cost vectors") {
  CHECK(candidates(CandidateSpace::kBinary) == std::vector{OperatorKind::kFull, OperatorKind::kLinear});
  CHECK(cost_vector(CandidateSpace::kTriState, 16, 128).c == std::vector{1.0, 0.125, 0.0});
  CHECK(cost_vector(CandidateSpace::kBinary, 16, 128).c == std::vector{1.0, 0.0});
  CHECK(parse_candidate_space("tri") == CandidateSpace::kTriState);
  CHECK_THROWS_AS(parse_candidate_space("quad"), Error);
}

TEST_CASE("routing probabilities") {
  const auto u = routing_probs(std::vector{0.0, 0.0, 0.0}, 1.0);
  for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto h = routing_probs(std::vector{std::log(2.0), 0.0, 0.0}, 1.0);
  CHECK(std::abs(h[0] - 0.5) < 1e-15);
  CHECK(std::abs(h[1] - 0.25) < 1e-15);
  const auto s = routing_probs(std::vector{1.0, 0.0, 0.0}, 0.1);
  const double expect = std::exp(10.0) / (std::exp(10.0) + 2.0);
  CHECK(std::abs(s[0] - expect) < 1e-15);
  CHECK(s[0] == doctest::Approx(0.999909).epsilon(1e-6));
  CHECK_THROWS_AS(routing_probs(std::vector{1.0, 0.0}, 0.0), Error);

  ad::Tape t;
  const Tensor a = random_tensor({3, 3}, 1);
  const auto p = t.value(routing_probs(t, t.constant(a), 0.7));
  for (std::size_t r = 0; r < 3; ++r) {
    const auto plain = routing_probs(std::span<const double>(a.data.data() + 3 * r, 3), 0.7);
    for (std::size_t c = 0; c < 3; ++c) CHECK(p.at(r, c) == plain[c]);
  }
}

TEST_CASE("soft mix endpoints and midpoint") {
  const Model m = random_model(tiny_spec(), 2);
  const Tensor h = random_tensor({7, 16}, 3);
  const Tensor full = run_op(m, h, [&](Binder& b, ad::NodeId x) { return full_attention(b, m, 1, x); });
  const Tensor win = run_op(m, h, [&](Binder& b, ad::NodeId x) { return window_attention(b, m, 1, x, 4); });
  const Tensor lin = run_op(m, h, [&](Binder& b, ad::NodeId x) { return linear_attention(b, m, 1, x); });
  CHECK(max_abs_diff(soft_op(m, 1, h, {1, 0, 0}), full) <= 1e-12);
  CHECK(max_abs_diff(soft_op(m, 1, h, {0, 1, 0}), win) <= 1e-12);
  CHECK(max_abs_diff(soft_op(m, 1, h, {0, 0, 1}), lin) <= 1e-12);
  Tensor mean = full;
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = 0.5 * full[i] + 0.5 * win[i];
  CHECK(max_abs_diff(soft_op(m, 1, h, {0.5, 0.5, 0}), mean) <= 1e-12);
  CHECK(max_abs_diff(soft_op(m, 1, h, {0, 1}, candidates(CandidateSpace::kBinary)), lin) <= 1e-12);
  CHECK_THROWS_AS(soft_op(m, 1, h, {0.5, 0.3, 0.1}), Error);
  CHECK_THROWS_AS(soft_op(m, 1, h, {0.5, 0.5}), Error);
}

TEST_CASE("distillation KL values") {
  const Tensor zt({1, 2}, {0.0, 0.0});
  const Tensor zs({1, 2}, {std::log(2.0), 0.0});
  const double hand = 0.5 * std::log(0.75) + 0.5 * std::log(1.5);
  CHECK(std::abs(kl_distill_loss(zt, zs, 1.0) - hand) < 1e-15);
  CHECK(hand == doctest::Approx(0.058892).epsilon(1e-5));
  // tau = 2: tau^2 times the KL of the tau-scaled distributions.
  const double a = std::exp(std::log(2.0) / 2.0);
  const double q0 = a / (a + 1.0), q1 = 1.0 / (a + 1.0);
  const double tau2 = 4.0 * (0.5 * std::log(0.5 / q0) + 0.5 * std::log(0.5 / q1));
  CHECK(std::abs(kl_distill_loss(zt, zs, 2.0) - tau2) < 1e-15);
  const Tensor big = random_tensor({5, 9}, 4, 2.0), other = random_tensor({5, 9}, 5, 2.0);
  for (double tau : {0.5, 1.0, 3.0}) {
    CHECK(kl_distill_loss(big, big, tau) == 0.0);
    CHECK(std::abs(kl_distill_loss(big, other, tau) - naive_kl(big, other, tau)) < 1e-12);
  }
}

TEST_CASE("expected cost") {
  const auto c = cost_vector(CandidateSpace::kTriState, 16, 128);
  ArchState s = ArchState::uniform(8, CandidateSpace::kTriState);
  CHECK(std::abs(cost_loss(s, c) - 2.625) < 1e-12);
  for (std::size_t r = 0; r < 7; ++r) {
    s.alpha.at(r, 0) = 0;
    s.alpha.at(r, 2) = 1000;
  }
  CHECK(cost_loss(s, c) == 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    s.alpha.at(r, 0) = 1000;
    s.alpha.at(r, 2) = 0;
  }
  CHECK(cost_loss(s, c) == 3.0);
}

TEST_CASE("search loss composition") {
  ad::Tape t;
  const auto zt = t.constant(random_tensor({6, 10}, 6));
  const auto zs = t.constant(random_tensor({6, 10}, 7));
  const auto probs = t.constant(Tensor::filled({7, 3}, 1.0 / 3.0));
  const auto c = cost_vector(CandidateSpace::kTriState, 16, 128);
  const auto zero = search_loss(t, zt, zs, probs, c, 1.0, 0.0);
  CHECK(t.value(zero.total)[0] == t.value(ad::kl_rows(t, zt, zs, 1.0))[0]);
  const auto same = search_loss(t, zt, zt, probs, c, 1.0, 0.05);
  CHECK(std::abs(t.value(same.total)[0] - 0.05 * 2.625) < 1e-15);
}

TEST_CASE("alpha gradient of the search loss matches finite differences on a 4-layer toy") {
  const Model m = random_model(tiny_spec(4), 8, 0.2);
  const auto tokens = random_tokens(12, 20, 9);
  for (auto space : {CandidateSpace::kTriState, CandidateSpace::kBinary}) {
    SearchConfig cfg;
    cfg.seq_len = 12;
    cfg.lambda = 0.05;
    cfg.tau = 1.5;
    ArchState s = state_with(4, space, 10);
    s.temperature = 0.6;
    const auto r = alpha_fd(m, s, tokens, cfg);
    INFO(r.max_rel_error);
    CHECK(r.max_rel_error < 1e-5);
    CHECK(r.max_abs_grad > 1e-4);
  }
}

TEST_CASE("annealing schedule") {
  SearchConfig cfg;
  CHECK(anneal_schedule(0, cfg) == 1.0);
  CHECK(std::abs(anneal_schedule(1500, cfg) - 0.1) < 1e-15);
  CHECK(std::abs(anneal_schedule(750, cfg) - std::sqrt(0.1)) < 1e-12);
  CHECK(anneal_schedule(750, cfg) == doctest::Approx(0.316228).epsilon(1e-6));
  CHECK(anneal_schedule(5000, cfg) == anneal_schedule(1500, cfg));
  for (int s = 1; s <= 1500; ++s) CHECK(anneal_schedule(s, cfg) < anneal_schedule(s - 1, cfg));
  cfg.anneal = false;
  CHECK(anneal_schedule(900, cfg) == 1.0);
  SearchConfig bad;
  bad.t_final = 2.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = SearchConfig{};
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("search steps: freeze contract and lambda direction") {
  const Model m = random_model(tiny_spec(4), 11, 0.2);
  std::vector<TokenSeq> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(random_tokens(16, 20, 50 + static_cast<std::uint64_t>(i)));
  SearchConfig cfg;
  cfg.seq_len = 16;
  cfg.grad_accum = 2;
  cfg.anneal = false;

  SUBCASE("large lambda: p_LINEAR rises every step over 50 steps") {
    cfg.lambda = 10.0;
    const auto before = m.params().hash();
    ArchSearch search(m, cfg);
    std::vector<double> prev(3, 1.0 / 3.0);
    for (int s = 0; s < 50; ++s) {
      search.step(batch);
      for (int l = 0; l < 3; ++l) {
        const double p = search.state().probs(l)[2];
        CHECK(p > prev[static_cast<std::size_t>(l)]);
        prev[static_cast<std::size_t>(l)] = p;
      }
    }
    CHECK(m.params().hash() == before);
  }
  SUBCASE("lambda 0: mean p_FULL rises over 200 steps") {
    cfg.lambda = 0.0;
    ArchSearch search(m, cfg);
    for (int s = 0; s < 200; ++s) search.step(batch);
    double mean_full = 0.0;
    for (int l = 0; l < 3; ++l) mean_full += search.state().probs(l)[0] / 3.0;
    CHECK(mean_full > 1.0 / 3.0);
  }
  SUBCASE("a gradient on a model weight is a freeze violation") {
    CHECK_THROWS_AS(evaluate_search_loss(m, ArchState::uniform(3, CandidateSpace::kTriState), batch[0], cfg), Error);
  }
}

TEST_CASE("run_search logs every update and leaves weights untouched") {
  const Model m = random_model(tiny_spec(4), 12, 0.2);
  const auto stream = random_tokens(4000, 20, 13);
  SearchConfig cfg;
  cfg.seq_len = 16;
  cfg.grad_accum = 2;
  cfg.micro_steps = 20;
  cfg.anneal_steps = 20;
  const auto r = run_search(m, stream, cfg);
  CHECK(r.log.size() == 10);
  CHECK(r.log.back().step == 20);
  // Rows carry the temperature of their last micro-step.
  CHECK(r.log.back().temperature == anneal_schedule(19, cfg));
  CHECK(r.state.temperature == 0.1);
  CHECK(r.weights_hash_before == r.weights_hash_after);
  CHECK(r.arch.layers() == 4);
  CHECK(r.arch.ops[0] == OperatorKind::kLinear);
  CHECK(r.budget == realized_budget(r.arch, 4, 16));
  for (const auto& row : r.log) CHECK(std::abs(row.loss - (row.kl + cfg.lambda * row.cost)) < 1e-12);
  const auto again = run_search(m, stream, cfg);
  CHECK(again.state.alpha.data == r.state.alpha.data);
}

TEST_CASE("discretization") {
  CHECK(discretize_probs({{0.2, 0.3, 0.5}}, CandidateSpace::kTriState).ops ==
        std::vector{OperatorKind::kLinear, OperatorKind::kLinear});
  CHECK(discretize_probs({{0.5, 0.5, 0.0}}, CandidateSpace::kTriState).ops[1] == OperatorKind::kWindow);
  CHECK(discretize_probs({{0.5, 0.5}}, CandidateSpace::kBinary).ops[1] == OperatorKind::kLinear);
  CHECK(discretize_probs({{0.4, 0.3, 0.3}}, CandidateSpace::kTriState).ops[1] == OperatorKind::kFull);
  const auto one_hot = discretize_probs({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, CandidateSpace::kTriState);
  CHECK(one_hot.to_string() == "L F W L");
  ArchState s = ArchState::uniform(4, CandidateSpace::kTriState);
  CHECK(discretize(s).to_string() == "L L L L");
  s.alpha.at(0, 0) = 3.0;
  s.alpha.at(1, 1) = 3.0;
  CHECK(discretize(s).to_string() == "L F W L");
}

TEST_CASE("realized budget") {
  auto arch = [](int nf, int nw, int layers) {
    HybridArch a = HybridArch::all(layers, OperatorKind::kLinear);
    for (int i = 0; i < nf; ++i) a.ops[static_cast<std::size_t>(i + 1)] = OperatorKind::kFull;
    for (int i = 0; i < nw; ++i) a.ops[static_cast<std::size_t>(nf + 1 + i)] = OperatorKind::kWindow;
    return a;
  };
  CHECK(realized_budget(arch(4, 7, 36), 16, 128) == 4.875);
  CHECK(realized_budget(arch(8, 8, 36), 16, 128) == 9.0);
  CHECK(realized_budget(arch(17, 6, 36), 16, 128) == 17.75);
  CHECK(realized_budget(HybridArch::all(8, OperatorKind::kLinear), 16, 128) == 0.0);
}

TEST_CASE("routing diagnostics") {
  const auto u = routing_diagnostics({{1. / 3, 1. / 3, 1. / 3}});
  CHECK(std::abs(u.avg_entropy - std::log(3.0)) < 1e-12);
  CHECK(std::abs(u.avg_top1 - 1.0 / 3.0) < 1e-15);
  CHECK(u.avg_margin == 0.0);
  CHECK(u.ambiguous == 1);
  const auto o = routing_diagnostics({{0, 1, 0}});
  CHECK(o.avg_entropy == 0.0);
  CHECK(o.avg_top1 == 1.0);
  CHECK(o.avg_margin == 1.0);
  CHECK(o.ambiguous == 0);
  const auto h = routing_diagnostics({{0.6, 0.3, 0.1}});
  CHECK(h.avg_entropy == doctest::Approx(0.897946).epsilon(1e-6));
  CHECK(std::abs(h.avg_margin - 0.3) < 1e-15);
  CHECK(routing_diagnostics({{0.625, 0.375}}).ambiguous == 0);
  CHECK(routing_diagnostics({{0.59375, 0.40625}}).ambiguous == 1);
  CHECK(routing_diagnostics({{0.5, 0.3, 0.2}}).ambiguous == 0);
  CHECK(routing_diagnostics({{0.5, 0.3125, 0.1875}}).ambiguous == 1);
  const auto state = routing_diagnostics(ArchState::uniform(8, CandidateSpace::kTriState));
  CHECK(state.layers.size() == 7);
  CHECK(state.ambiguous == 7);
}

TEST_CASE("properties on sampled states") {
  const auto c = cost_vector(CandidateSpace::kTriState, 16, 128);
  for (int trial = 0; trial < 50; ++trial) {
    ArchState s = state_with(5, CandidateSpace::kTriState, 100 + static_cast<std::uint64_t>(trial), 2.0);
    s.temperature = 0.2 + 0.1 * (trial % 8);
    SUBCASE("cost gradient in the FULL logit is positive") {
      ad::Tape t;
      const auto alpha = t.leaf(s.alpha, 0, true);
      const auto g = t.backward(cost_loss(t, routing_probs(t, alpha, s.temperature), c)).at(0);
      for (std::size_t r = 0; r < 4; ++r) CHECK(g.at(r, 0) > 0.0);
    }
    SUBCASE("lower temperature sharpens; argmax is unchanged") {
      for (int l = 0; l < 4; ++l) {
        const std::span<const double> row(s.alpha.data.data() + 3 * l, 3);
        double prev_margin = -1.0;
        std::size_t arg = 0;
        for (double temp : {2.0, 1.0, 0.5, 0.25}) {
          auto p = routing_probs(row, temp);
          const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
          if (prev_margin >= 0.0) CHECK(top == arg);
          arg = top;
          std::sort(p.begin(), p.end());
          CHECK(p[2] - p[1] > prev_margin);
          prev_margin = p[2] - p[1];
        }
      }
    }
    SUBCASE("adding a constant to a row changes nothing") {
      ArchState shifted = s;
      for (std::size_t i = 0; i < 3; ++i) shifted.alpha.at(1, i) += 7.25;
      const auto a = s.probs(1), b = shifted.probs(1);
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
      CHECK(discretize(s) == discretize(shifted));
    }
    SUBCASE("budget bounds") {
      const double b = realized_budget(discretize(s), 16, 128);
      CHECK(b >= 0.0);
      CHECK(b <= 4 + 0.125);
    }
  }
}

TEST_CASE("a one-hot soft model matches its discretization") {
  const Model m = random_model(tiny_spec(4), 15, 0.2);
  const auto tokens = random_tokens(14, 20, 16);
  const HybridArch target = HybridArch::parse("F W L F");
  ArchState s = ArchState::uniform(4, CandidateSpace::kTriState);
  ad::Tape t;
  Binder b(t, m.params(), Trainable::kNone);
  Tensor p({3, 3});
  for (int l = 1; l < 4; ++l) p.at(static_cast<std::size_t>(l - 1), static_cast<std::size_t>(target.ops[l])) = 1.0;
  const auto out = model_forward(b, m, tokens, soft_plan(t, s, t.constant(p)));
  CHECK(max_abs_diff(t.value(out.logits), forward_logits(m, tokens, target)) <= 1e-10);
}
