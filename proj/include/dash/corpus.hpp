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
#include <span>
#include <random>
#include <vector>

namespace dash {

using TokenSeq = std::vector<int>;

// Reserved ids; every other id is a content token.
inline constexpr int kRecallStartToken = 0;
inline constexpr int kQueryToken = 1;
inline constexpr int kFirstContentToken = 2;

struct CorpusSpec {
  int vocab = 64;
  int branching = 4;          // successors per order-2 context
  double recall_rate = 0.3;   // probability that a segment is a recall segment
  int markov_run = 48;        // tokens per plain Markov segment
  int recall_pairs = 4;
  int recall_gap = 20;        // Markov filler between the pairs and the query
  std::uint64_t table_seed = 7;

  void validate() const;
  int content_tokens() const { return vocab - kFirstContentToken; }
  // Keys come from the lower half of the content ids, values from the upper.
  int key_begin() const { return kFirstContentToken; }
  int key_end() const { return kFirstContentToken + content_tokens() / 2; }
  int value_begin() const { return key_end(); }
  int value_end() const { return vocab; }
};

/// Order-2 Markov source over the content tokens.
class MarkovTable {
 public:
  explicit MarkovTable(const CorpusSpec& spec);

  int content() const { return n_; }
  // Successor content indices and probabilities for context (a, b), both
  // given as content indices.
  std::span<const int> successors(int a, int b) const;
  std::span<const double> probs(int a, int b) const;
  int sample(int a, int b, std::mt19937_64& rng) const;

  // Stationary distribution over pair states (a*n + b), by power iteration.
  std::vector<double> stationary_pairs(int max_iters = 10000, double tol = 1e-14) const;
  // Marginal of the stationary pair distribution over content indices.
  std::vector<double> stationary_unigram() const;
  // Entropy rate in nats: sum_ab pi(a,b) H(next | a,b).
  double entropy_rate() const;

 private:
  int n_ = 0;
  int branching_ = 0;
  std::vector<int> next_;
  std::vector<double> prob_;
};

struct RecallSegment {
  TokenSeq tokens;  // ends with the query key; the answer is not included
  int answer = 0;
};

class CorpusGenerator {
 public:
  CorpusGenerator(const CorpusSpec& spec, std::uint64_t seed);
  // Deterministic token stream for the seed.
  TokenSeq generate(std::size_t n_tokens);
  // Pure Markov stream (no recall segments).
  TokenSeq generate_markov(std::size_t n_tokens);
  // One recall probe: start marker, pairs, filler of `gap` tokens, query marker, key.
  RecallSegment recall_probe(int pairs, int gap);
  const MarkovTable& table() const { return table_; }

 private:
  void emit_markov(TokenSeq& out, std::size_t count);
  void emit_recall(TokenSeq& out, int pairs, int gap, int* answer, bool include_answer);

  CorpusSpec spec_;
  MarkovTable table_;
  std::mt19937_64 rng_;
  int prev2_ = 0, prev1_ = 0;  // content indices of the Markov context
};

/// Random fixed-length windows from a token stream. The stream must outlive
/// the sampler.
class WindowSampler {
 public:
  WindowSampler(std::span<const int> stream, std::size_t window, std::uint64_t seed);
  TokenSeq next();
  std::vector<TokenSeq> batch(std::size_t n);

 private:
  std::span<const int> stream_;
  std::size_t window_;
  std::mt19937_64 rng_;
};

// Train / held-out split of a stream: the last `heldout_fraction` is held out.
struct CorpusSplit {
  std::span<const int> train;
  std::span<const int> heldout;
};
CorpusSplit split_corpus(std::span<const int> stream, double heldout_fraction = 0.1);

}  // namespace dash
