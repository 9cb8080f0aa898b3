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

#include "dash/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dash/error.hpp"

namespace dash {

void CorpusSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "corpus: " + m); };
  if (vocab < 8) bad("vocab must be >= 8");
  if (branching < 1 || branching > content_tokens()) bad("branching must lie in [1, content tokens]");
  if (recall_rate < 0.0 || recall_rate > 1.0) bad("recall_rate must lie in [0, 1]");
  if (markov_run < 1) bad("markov_run must be >= 1");
  if (recall_pairs < 1 || recall_pairs > key_end() - key_begin()) bad("recall_pairs must fit the key alphabet");
  if (recall_gap < 0) bad("recall_gap must be >= 0");
}

MarkovTable::MarkovTable(const CorpusSpec& spec) : n_(spec.content_tokens()), branching_(spec.branching) {
  spec.validate();
  std::mt19937_64 rng(spec.table_seed);
  std::exponential_distribution<double> expo(1.0);
  const auto contexts = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  next_.resize(contexts * static_cast<std::size_t>(branching_));
  prob_.resize(next_.size());
  std::vector<int> perm(static_cast<std::size_t>(n_));
  for (std::size_t c = 0; c < contexts; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    // Partial Fisher-Yates for `branching` distinct successors.
    for (int i = 0; i < branching_; ++i) {
      std::uniform_int_distribution<int> pick(i, n_ - 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    double total = 0.0;
    for (int i = 0; i < branching_; ++i) {
      const auto at = c * static_cast<std::size_t>(branching_) + static_cast<std::size_t>(i);
      next_[at] = perm[static_cast<std::size_t>(i)];
      prob_[at] = expo(rng);
      total += prob_[at];
    }
    for (int i = 0; i < branching_; ++i) prob_[c * static_cast<std::size_t>(branching_) + static_cast<std::size_t>(i)] /= total;
  }
}

std::span<const int> MarkovTable::successors(int a, int b) const {
  const auto c = static_cast<std::size_t>(a * n_ + b);
  return {next_.data() + c * static_cast<std::size_t>(branching_), static_cast<std::size_t>(branching_)};
}

std::span<const double> MarkovTable::probs(int a, int b) const {
  const auto c = static_cast<std::size_t>(a * n_ + b);
  return {prob_.data() + c * static_cast<std::size_t>(branching_), static_cast<std::size_t>(branching_)};
}

int MarkovTable::sample(int a, int b, std::mt19937_64& rng) const {
  const auto p = probs(a, b);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (r < p[i]) return successors(a, b)[i];
    r -= p[i];
  }
  return successors(a, b).back();
}

std::vector<double> MarkovTable::stationary_pairs(int max_iters, double tol) const {
  const auto S = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  std::vector<double> pi(S, 1.0 / static_cast<double>(S)), nxt(S);
  for (int it = 0; it < max_iters; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        const double mass = pi[static_cast<std::size_t>(a * n_ + b)];
        if (mass == 0.0) continue;
        const auto s = successors(a, b);
        const auto p = probs(a, b);
        for (std::size_t i = 0; i < s.size(); ++i) nxt[static_cast<std::size_t>(b * n_ + s[i])] += mass * p[i];
      }
    // Lazy averaging guards against periodic chains.
    double diff = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      const double v = 0.5 * (pi[i] + nxt[i]);
      diff += std::abs(v - pi[i]);
      pi[i] = v;
    }
    if (diff < tol) break;
  }
  return pi;
}

std::vector<double> MarkovTable::stationary_unigram() const {
  const auto pi = stationary_pairs();
  std::vector<double> u(static_cast<std::size_t>(n_), 0.0);
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b) u[static_cast<std::size_t>(b)] += pi[static_cast<std::size_t>(a * n_ + b)];
  return u;
}

double MarkovTable::entropy_rate() const {
  const auto pi = stationary_pairs();
  double h = 0.0;
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b) {
      double hr = 0.0;
      for (double p : probs(a, b))
        if (p > 0.0) hr -= p * std::log(p);
      h += pi[static_cast<std::size_t>(a * n_ + b)] * hr;
    }
  return h;
}

// ---- generator ---------------------------------------------------------------

CorpusGenerator::CorpusGenerator(const CorpusSpec& spec, std::uint64_t seed)
    : spec_(spec), table_(spec), rng_(seed) {
  std::uniform_int_distribution<int> pick(0, table_.content() - 1);
  prev2_ = pick(rng_);
  prev1_ = pick(rng_);
}

void CorpusGenerator::emit_markov(TokenSeq& out, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const int nx = table_.sample(prev2_, prev1_, rng_);
    out.push_back(nx + kFirstContentToken);
    prev2_ = prev1_;
    prev1_ = nx;
  }
}

void CorpusGenerator::emit_recall(TokenSeq& out, int pairs, int gap, int* answer, bool include_answer) {
  std::vector<int> keys(static_cast<std::size_t>(spec_.key_end() - spec_.key_begin()));
  std::iota(keys.begin(), keys.end(), spec_.key_begin());
  std::shuffle(keys.begin(), keys.end(), rng_);
  std::uniform_int_distribution<int> val(spec_.value_begin(), spec_.value_end() - 1);
  std::vector<int> values(static_cast<std::size_t>(pairs));
  out.push_back(kRecallStartToken);
  for (int i = 0; i < pairs; ++i) {
    values[static_cast<std::size_t>(i)] = val(rng_);
    out.push_back(keys[static_cast<std::size_t>(i)]);
    out.push_back(values[static_cast<std::size_t>(i)]);
  }
  emit_markov(out, static_cast<std::size_t>(gap));
  std::uniform_int_distribution<int> which(0, pairs - 1);
  const auto q = static_cast<std::size_t>(which(rng_));
  out.push_back(kQueryToken);
  out.push_back(keys[q]);
  if (answer) *answer = values[q];
  if (include_answer) out.push_back(values[q]);
}

TokenSeq CorpusGenerator::generate(std::size_t n_tokens) {
  TokenSeq out;
  out.reserve(n_tokens + 64);
  std::bernoulli_distribution recall(spec_.recall_rate);
  while (out.size() < n_tokens) {
    if (recall(rng_)) emit_recall(out, spec_.recall_pairs, spec_.recall_gap, nullptr, true);
    else emit_markov(out, static_cast<std::size_t>(spec_.markov_run));
  }
  out.resize(n_tokens);
  return out;
}

TokenSeq CorpusGenerator::generate_markov(std::size_t n_tokens) {
  TokenSeq out;
  out.reserve(n_tokens);
  emit_markov(out, n_tokens);
  return out;
}

RecallSegment CorpusGenerator::recall_probe(int pairs, int gap) {
  RecallSegment seg;
  emit_recall(seg.tokens, pairs, gap, &seg.answer, false);
  return seg;
}

// ---- sampling ------------------------------------------------------------------

WindowSampler::WindowSampler(std::span<const int> stream, std::size_t window, std::uint64_t seed)
    : stream_(stream), window_(window), rng_(seed) {
  if (window == 0 || stream.size() < window) {
    fail(ErrorCode::kInvalidArgument, "WindowSampler: stream of " + std::to_string(stream.size()) +
                                          " tokens is shorter than window " + std::to_string(window));
  }
}

TokenSeq WindowSampler::next() {
  std::uniform_int_distribution<std::size_t> off(0, stream_.size() - window_);
  const auto o = off(rng_);
  return TokenSeq(stream_.begin() + static_cast<std::ptrdiff_t>(o),
                  stream_.begin() + static_cast<std::ptrdiff_t>(o + window_));
}

std::vector<TokenSeq> WindowSampler::batch(std::size_t n) {
  std::vector<TokenSeq> b;
  b.reserve(n);
  for (std::size_t i = 0; i < n; ++i) b.push_back(next());
  return b;
}

CorpusSplit split_corpus(std::span<const int> stream, double heldout_fraction) {
  const auto held = static_cast<std::size_t>(static_cast<double>(stream.size()) * heldout_fraction);
  return {stream.first(stream.size() - held), stream.last(held)};
}

}  // namespace dash
