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

#include "dash/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "dash/arch_search.hpp"
#include "dash/error.hpp"

namespace dash {

void ModelSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "model spec: " + m); };
  if (layers < 2) bad("layers must be >= 2");
  if (heads < 1 || width < 1 || width % heads != 0) bad("width must be a positive multiple of heads");
  if (vocab < 2) bad("vocab must be >= 2");
  if (max_seq < 1) bad("max_seq must be >= 1");
  if (window < 1 || window > max_seq) bad("window must lie in [1, max_seq]");
  if (ffn_mult < 1) bad("ffn_mult must be >= 1");
}

char mnemonic(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kFull: return 'F';
    case OperatorKind::kWindow: return 'W';
    case OperatorKind::kLinear: return 'L';
  }
  return '?';
}

OperatorKind parse_mnemonic(char c) {
  switch (c) {
    case 'F': return OperatorKind::kFull;
    case 'W': return OperatorKind::kWindow;
    case 'L': return OperatorKind::kLinear;
    default: fail(ErrorCode::kInvalidArgument, std::string("unknown operator mnemonic '") + c + "'");
  }
}

int HybridArch::count(OperatorKind kind) const {
  int n = 0;
  for (auto o : ops) n += o == kind;
  return n;
}

std::string HybridArch::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) s += ' ';
    s += mnemonic(ops[i]);
  }
  return s;
}

HybridArch HybridArch::parse(std::string_view text) {
  HybridArch a;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    if (tok.size() != 1) fail(ErrorCode::kInvalidArgument, "bad operator token '" + tok + "'");
    a.ops.push_back(parse_mnemonic(tok[0]));
  }
  return a;
}

ArchPlan plan_of(const HybridArch& arch) { return ArchPlan(arch.ops.begin(), arch.ops.end()); }

bool is_linear_param(std::string_view name) { return name.find(".lin.") != std::string_view::npos; }

bool is_attention_operator_param(std::string_view name) {
  return is_linear_param(name) || name.find(".attn.") != std::string_view::npos;
}

// ---- Model ---------------------------------------------------------------

namespace {

std::string lname(int l, const char* suffix) { return "layers." + std::to_string(l) + "." + suffix; }

struct Init {
  std::mt19937_64 rng;
  Tensor normal(Shape s, double stddev) {
    std::normal_distribution<double> nd(0.0, stddev);
    Tensor t(std::move(s));
    for (auto& v : t.data) v = nd(rng);
    return t;
  }
};

}  // namespace

Model Model::init(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  Init init{std::mt19937_64(seed)};
  const auto d = static_cast<std::size_t>(spec.width);
  const auto V = static_cast<std::size_t>(spec.vocab);
  const auto H = static_cast<std::size_t>(spec.heads);
  const auto F = d * static_cast<std::size_t>(spec.ffn_mult);
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid = proj / std::sqrt(2.0 * spec.layers);
  auto& st = m.store_;
  st.add("tok_emb", init.normal({V, d}, 0.5));
  st.add("pos_emb", init.normal({static_cast<std::size_t>(spec.max_seq), d}, 0.1));
  for (int l = 0; l < spec.layers; ++l) {
    st.add(lname(l, "ln1.g"), Tensor::filled({d}, 1.0));
    st.add(lname(l, "ln1.b"), Tensor({d}));
    st.add(lname(l, "attn.wq"), init.normal({d, d}, proj));
    st.add(lname(l, "attn.wk"), init.normal({d, d}, proj));
    st.add(lname(l, "attn.wv"), init.normal({d, d}, proj));
    st.add(lname(l, "attn.wo"), init.normal({d, d}, resid));
    st.add(lname(l, "lin.wq"), init.normal({d, d}, proj));
    st.add(lname(l, "lin.wk"), init.normal({d, d}, proj));
    st.add(lname(l, "lin.wv"), init.normal({d, d}, proj));
    st.add(lname(l, "lin.wo"), init.normal({d, d}, resid));
    st.add(lname(l, "lin.wg"), init.normal({d, H}, 0.1 * proj));
    st.add(lname(l, "lin.bg"), Tensor::filled({H}, 2.0));
    st.add(lname(l, "lin.wb"), init.normal({d, H}, 0.1 * proj));
    st.add(lname(l, "lin.bb"), Tensor({H}));
    st.add(lname(l, "ln2.g"), Tensor::filled({d}, 1.0));
    st.add(lname(l, "ln2.b"), Tensor({d}));
    st.add(lname(l, "ffn.w1"), init.normal({d, F}, proj));
    st.add(lname(l, "ffn.w2"), init.normal({F, d}, resid * std::sqrt(1.0 / spec.ffn_mult)));
  }
  st.add("lnf.g", Tensor::filled({d}, 1.0));
  st.add("lnf.b", Tensor({d}));
  st.add("unembed", init.normal({d, V}, proj));
  m.bind_keys();
  return m;
}

Model Model::from_store(const ModelSpec& spec, ParamStore store) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.store_ = std::move(store);
  m.bind_keys();
  // Shape check against a reference layout.
  const Model ref = Model::init(spec, 0);
  for (std::size_t k = 0; k < ref.store_.size(); ++k) {
    const auto& nm = ref.store_.name(static_cast<ParamKey>(k));
    const auto& want = ref.store_.value(static_cast<ParamKey>(k)).shape;
    const auto& got = m.store_.value(m.store_.key(nm)).shape;
    if (want != got) {
      fail(ErrorCode::kShape, "parameter '" + nm + "' has shape " + shape_str(got) + ", expected " + shape_str(want));
    }
  }
  return m;
}

void Model::bind_keys() {
  tok_emb_ = store_.key("tok_emb");
  pos_emb_ = store_.key("pos_emb");
  lnf_g_ = store_.key("lnf.g");
  lnf_b_ = store_.key("lnf.b");
  unembed_ = store_.key("unembed");
  layers_.clear();
  for (int l = 0; l < spec_.layers; ++l) {
    auto k = [&](const char* s) { return store_.key(lname(l, s)); };
    layers_.push_back(LayerParams{k("ln1.g"), k("ln1.b"), k("ln2.g"), k("ln2.b"), k("attn.wq"), k("attn.wk"),
                                  k("attn.wv"), k("attn.wo"), k("lin.wq"), k("lin.wk"), k("lin.wv"), k("lin.wo"),
                                  k("lin.wg"), k("lin.bg"), k("lin.wb"), k("lin.bb"), k("ffn.w1"), k("ffn.w2")});
  }
}

void Model::seed_linear_from_attention() {
  for (const auto& lp : layers_) {
    store_.mutable_value(lp.lin_q) = store_.value(lp.attn_q);
    store_.mutable_value(lp.lin_k) = store_.value(lp.attn_k);
    store_.mutable_value(lp.lin_v) = store_.value(lp.attn_v);
    store_.mutable_value(lp.lin_o) = store_.value(lp.attn_o);
  }
}

// ---- Binder ----------------------------------------------------------------

Binder::Binder(ad::Tape& tape, const ParamStore& store, Trainable policy)
    : tape_(tape), store_(store), policy_(policy), bound_(store.size(), -1) {}

ad::NodeId Binder::operator()(ParamKey key) {
  if (bound_.at(key) >= 0) return ad::NodeId{static_cast<std::uint32_t>(bound_[key])};
  bool trainable = false;
  switch (policy_) {
    case Trainable::kNone: break;
    case Trainable::kLinearOnly: trainable = is_linear_param(store_.name(key)); break;
    case Trainable::kAll: trainable = true; break;
  }
  const auto id = tape_.leaf(store_.value(key), key, trainable);
  bound_[key] = id.index;
  return id;
}

// ---- operators -------------------------------------------------------------

ad::Mask causal_mask(std::size_t T, std::size_t window) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, ad::Mask> cache;
  const std::size_t w = std::min(window, T);
  auto& slot = cache[{T, w}];
  if (!slot) {
    auto m = std::make_shared<Tensor>(Shape{T, T});
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) m->at(i, j) = (j <= i && i - j < w) ? 0.0 : ad::kMaskedLogit;
    slot = std::move(m);
  }
  return slot;
}

namespace {

ad::NodeId softmax_attention(Binder& b, const Model& m, int layer, ad::NodeId h, std::size_t window) {
  auto& t = b.tape();
  const auto& spec = m.spec();
  const std::size_t T = t.shape(h).at(0);
  if (T > static_cast<std::size_t>(spec.max_seq)) {
    fail(ErrorCode::kInvalidArgument,
         "attention: sequence length " + std::to_string(T) + " exceeds max_seq " + std::to_string(spec.max_seq));
  }
  const auto& lp = m.layer(layer);
  const auto q = ad::matmul(t, h, b(lp.attn_q));
  const auto k = ad::matmul(t, h, b(lp.attn_k));
  const auto v = ad::matmul(t, h, b(lp.attn_v));
  const auto dh = static_cast<std::size_t>(spec.head_dim());
  const auto mask = causal_mask(T, window);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::NodeId> heads;
  for (std::size_t hd = 0; hd < static_cast<std::size_t>(spec.heads); ++hd) {
    const auto qh = ad::slice_cols(t, q, hd * dh, dh);
    const auto kh = ad::slice_cols(t, k, hd * dh, dh);
    const auto vh = ad::slice_cols(t, v, hd * dh, dh);
    const auto scores = ad::scale(t, ad::matmul(t, qh, kh, false, true), inv_sqrt);
    heads.push_back(ad::matmul(t, ad::softmax(t, scores, mask), vh));
  }
  return ad::matmul(t, ad::concat_cols(t, heads), b(lp.attn_o));
}

}  // namespace

ad::NodeId full_attention(Binder& b, const Model& m, int layer, ad::NodeId h) {
  return softmax_attention(b, m, layer, h, b.tape().shape(h).at(0));
}

ad::NodeId window_attention(Binder& b, const Model& m, int layer, ad::NodeId h, int window) {
  if (window < 1) fail(ErrorCode::kInvalidArgument, "window_attention: window must be >= 1");
  return softmax_attention(b, m, layer, h, static_cast<std::size_t>(window));
}

ad::NodeId linear_attention(Binder& b, const Model& m, int layer, ad::NodeId h) {
  auto& t = b.tape();
  const auto& spec = m.spec();
  const auto& lp = m.layer(layer);
  const auto q = ad::matmul(t, h, b(lp.lin_q));
  const auto k = ad::matmul(t, h, b(lp.lin_k));
  const auto v = ad::matmul(t, h, b(lp.lin_v));
  const auto gate = ad::sigmoid(t, ad::add_bias(t, ad::matmul(t, h, b(lp.lin_gate_w)), b(lp.lin_gate_b)));
  const auto beta = ad::sigmoid(t, ad::add_bias(t, ad::matmul(t, h, b(lp.lin_beta_w)), b(lp.lin_beta_b)));
  const auto dh = static_cast<std::size_t>(spec.head_dim());
  std::vector<ad::NodeId> heads;
  for (std::size_t hd = 0; hd < static_cast<std::size_t>(spec.heads); ++hd) {
    const auto qh = ad::slice_cols(t, q, hd * dh, dh);
    const auto kh = ad::l2_normalize_rows(t, ad::slice_cols(t, k, hd * dh, dh));
    const auto vh = ad::slice_cols(t, v, hd * dh, dh);
    heads.push_back(ad::delta_scan(t, qh, kh, vh, ad::slice_cols(t, gate, hd, 1), ad::slice_cols(t, beta, hd, 1)));
  }
  return ad::matmul(t, ad::concat_cols(t, heads), b(lp.lin_o));
}

ad::NodeId apply_operator(Binder& b, const Model& m, int layer, ad::NodeId h, OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kFull: return full_attention(b, m, layer, h);
    case OperatorKind::kWindow: return window_attention(b, m, layer, h, m.spec().window);
    case OperatorKind::kLinear: return linear_attention(b, m, layer, h);
  }
  fail(ErrorCode::kInvalidArgument, "apply_operator: bad operator kind");
}

BlockOutput block_forward(Binder& b, const Model& m, int layer, ad::NodeId x, const LayerPlan& mixer) {
  auto& t = b.tape();
  const auto& lp = m.layer(layer);
  const auto h = ad::layer_norm(t, x, b(lp.ln1_g), b(lp.ln1_b));
  const auto mixed = std::visit(
      [&](const auto& plan) -> ad::NodeId {
        using P = std::decay_t<decltype(plan)>;
        if constexpr (std::is_same_v<P, OperatorKind>) return apply_operator(b, m, layer, h, plan);
        else return soft_mix(b, m, layer, h, plan);
      },
      mixer);
  const auto u = ad::add(t, x, mixed);
  const auto h2 = ad::layer_norm(t, u, b(lp.ln2_g), b(lp.ln2_b));
  const auto f = ad::matmul(t, ad::silu(t, ad::matmul(t, h2, b(lp.ffn_in))), b(lp.ffn_out));
  return BlockOutput{u, ad::add(t, u, f)};
}

ForwardResult model_forward(Binder& b, const Model& m, std::span<const int> tokens, const ArchPlan& plan) {
  auto& t = b.tape();
  const auto& spec = m.spec();
  if (plan.size() != static_cast<std::size_t>(spec.layers)) {
    fail(ErrorCode::kInvalidArgument, "model_forward: plan has " + std::to_string(plan.size()) +
                                          " layers, model has " + std::to_string(spec.layers));
  }
  const std::size_t T = tokens.size();
  if (T == 0 || T > static_cast<std::size_t>(spec.max_seq)) {
    fail(ErrorCode::kInvalidArgument, "model_forward: sequence length " + std::to_string(T) + " outside [1, " +
                                          std::to_string(spec.max_seq) + "]");
  }
  for (int id : tokens) {
    if (id < 0 || id >= spec.vocab) {
      fail(ErrorCode::kInvalidArgument, "model_forward: token id " + std::to_string(id) + " out of range");
    }
  }
  const auto tok = ad::embedding(t, b(m.tok_emb()), tokens);
  const auto pos = ad::slice_rows(t, b(m.pos_emb()), 0, T);
  auto x = ad::add(t, tok, pos);
  ForwardResult res;
  for (int l = 0; l < spec.layers; ++l) {
    const auto blk = block_forward(b, m, l, x, plan[static_cast<std::size_t>(l)]);
    res.post_mixer.push_back(blk.post_mixer);
    x = blk.out;
  }
  const auto hf = ad::layer_norm(t, x, b(m.lnf_g()), b(m.lnf_b()));
  res.logits = ad::matmul(t, hf, b(m.unembed()));
  return res;
}

Tensor forward_logits(const Model& m, std::span<const int> tokens, const HybridArch& arch) {
  ad::Tape tape;
  Binder b(tape, m.params(), Trainable::kNone);
  const auto r = model_forward(b, m, tokens, plan_of(arch));
  return tape.value(r.logits);
}

}  // namespace dash
