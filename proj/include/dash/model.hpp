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
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dash/autodiff.hpp"
#include "dash/params.hpp"

namespace dash {

struct ModelSpec {
  int layers = 8;
  int width = 64;
  int heads = 2;
  int vocab = 64;
  int max_seq = 128;
  int window = 16;
  int ffn_mult = 4;

  int head_dim() const { return width / heads; }
  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

enum class OperatorKind : std::uint8_t { kFull = 0, kWindow = 1, kLinear = 2 };

char mnemonic(OperatorKind kind);
OperatorKind parse_mnemonic(char c);

/// A length-L operator sequence.
struct HybridArch {
  std::vector<OperatorKind> ops;

  static HybridArch all(int layers, OperatorKind kind) {
    return HybridArch{std::vector<OperatorKind>(static_cast<std::size_t>(layers), kind)};
  }
  int count(OperatorKind kind) const;
  int layers() const { return static_cast<int>(ops.size()); }
  // Space-separated mnemonics, e.g. "L F W F".
  std::string to_string() const;
  static HybridArch parse(std::string_view text);
  friend bool operator==(const HybridArch&, const HybridArch&) = default;
};

// A probability-weighted mixture of candidate operators at one layer. `probs`
// is a rank-1 node aligned with `candidates`.
struct SoftMix {
  ad::NodeId probs;
  std::vector<OperatorKind> candidates;
};

using LayerPlan = std::variant<OperatorKind, SoftMix>;
using ArchPlan = std::vector<LayerPlan>;

ArchPlan plan_of(const HybridArch& arch);

struct LayerParams {
  ParamKey ln1_g, ln1_b, ln2_g, ln2_b;
  ParamKey attn_q, attn_k, attn_v, attn_o;
  ParamKey lin_q, lin_k, lin_v, lin_o, lin_gate_w, lin_gate_b, lin_beta_w, lin_beta_b;
  ParamKey ffn_in, ffn_out;
};

bool is_linear_param(std::string_view name);
bool is_attention_operator_param(std::string_view name);

/// Decoder-only transformer holding both the softmax-attention weights and
/// the per-layer linear-attention candidate weights.
class Model {
 public:
  static Model init(const ModelSpec& spec, std::uint64_t seed);
  // Adopts an existing store; every expected tensor must be present with
  // the right shape.
  static Model from_store(const ModelSpec& spec, ParamStore store);

  const ModelSpec& spec() const { return spec_; }
  const ParamStore& params() const { return store_; }
  ParamStore& params() { return store_; }
  const LayerParams& layer(int l) const { return layers_.at(static_cast<std::size_t>(l)); }

  ParamKey tok_emb() const { return tok_emb_; }
  ParamKey pos_emb() const { return pos_emb_; }
  ParamKey lnf_g() const { return lnf_g_; }
  ParamKey lnf_b() const { return lnf_b_; }
  ParamKey unembed() const { return unembed_; }

  // Copies each layer's attention projections into its linear candidate.
  void seed_linear_from_attention();

 private:
  Model() = default;
  void bind_keys();

  ModelSpec spec_;
  ParamStore store_;
  std::vector<LayerParams> layers_;
  ParamKey tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, unembed_ = 0;
};

enum class Trainable { kNone, kLinearOnly, kAll };

/// Lazily places model parameters on a tape as leaves.
class Binder {
 public:
  Binder(ad::Tape& tape, const ParamStore& store, Trainable policy);
  ad::NodeId operator()(ParamKey key);
  ad::Tape& tape() { return tape_; }

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  Trainable policy_;
  std::vector<std::int64_t> bound_;
};

// Additive mask: position t sees [t - window + 1, t]. window >= T gives the
// plain causal mask.
ad::Mask causal_mask(std::size_t T, std::size_t window);

// Sequence mixers acting on a normalised input h of shape [T, d].
ad::NodeId full_attention(Binder& b, const Model& m, int layer, ad::NodeId h);
ad::NodeId window_attention(Binder& b, const Model& m, int layer, ad::NodeId h, int window);
ad::NodeId linear_attention(Binder& b, const Model& m, int layer, ad::NodeId h);
ad::NodeId apply_operator(Binder& b, const Model& m, int layer, ad::NodeId h, OperatorKind kind);

struct BlockOutput {
  ad::NodeId post_mixer;  // U = X + Mix(LN(X))
  ad::NodeId out;         // U + FFN(LN(U))
};
BlockOutput block_forward(Binder& b, const Model& m, int layer, ad::NodeId x, const LayerPlan& mixer);

struct ForwardResult {
  ad::NodeId logits;  // [T, vocab]
  std::vector<ad::NodeId> post_mixer;
};
ForwardResult model_forward(Binder& b, const Model& m, std::span<const int> tokens, const ArchPlan& plan);

// Gradient-free convenience evaluation.
Tensor forward_logits(const Model& m, std::span<const int> tokens, const HybridArch& arch);

}  // namespace dash
