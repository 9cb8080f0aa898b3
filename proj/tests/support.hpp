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

// Helpers shared by the unit tests: random inputs and brute-force oracles
// written against the plain math, independent of the tape.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dash/arch_search.hpp"
#include "dash/autodiff.hpp"
#include "dash/model.hpp"

namespace dash::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = n(rng);
  return t;
}

inline TokenSeq random_tokens(std::size_t n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, vocab - 1);
  TokenSeq out(n);
  for (auto& t : out) t = u(rng);
  return out;
}

inline ModelSpec tiny_spec(int layers = 4, int width = 16, int vocab = 20, int max_seq = 32, int window = 4) {
  ModelSpec s;
  s.layers = layers;
  s.width = width;
  s.heads = 2;
  s.vocab = vocab;
  s.max_seq = max_seq;
  s.window = window;
  s.ffn_mult = 2;
  return s;
}

// Larger-than-init weights so operators produce clearly distinct outputs.
inline Model random_model(const ModelSpec& spec, std::uint64_t seed, double scale = 0.3) {
  Model m = Model::init(spec, seed);
  std::mt19937_64 rng(seed ^ 0xABCDEFull);
  std::normal_distribution<double> n(0.0, scale);
  for (ParamKey k = 0; k < m.params().size(); ++k) {
    for (auto& v : m.params().mutable_value(k).data) v += n(rng);
  }
  return m;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out.at(i, j) = s;
    }
  return out;
}

// Per-query loop: token t attends to keys j in [t - window + 1, t].
inline Tensor naive_attention(const Model& m, int layer, const Tensor& h, std::size_t window) {
  const auto& ps = m.params();
  const auto& lp = m.layer(layer);
  const Tensor q = matmul(h, ps.value(lp.attn_q)), k = matmul(h, ps.value(lp.attn_k)),
               v = matmul(h, ps.value(lp.attn_v));
  const std::size_t T = h.rows(), dh = static_cast<std::size_t>(m.spec().head_dim());
  Tensor cat({T, static_cast<std::size_t>(m.spec().width)});
  for (std::size_t hd = 0; hd < static_cast<std::size_t>(m.spec().heads); ++hd) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
      std::vector<double> s;
      double mx = -1e300;
      for (std::size_t j = lo; j <= t; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q.at(t, hd * dh + c) * k.at(j, hd * dh + c);
        s.push_back(dot / std::sqrt(static_cast<double>(dh)));
        mx = std::max(mx, s.back());
      }
      double z = 0.0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = lo; j <= t; ++j) acc += s[j - lo] / z * v.at(j, hd * dh + c);
        cat.at(t, hd * dh + c) = acc;
      }
    }
  }
  return matmul(cat, ps.value(lp.attn_o));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step gated delta rule with an explicit state matrix per head.
inline Tensor naive_linear_attention(const Model& m, int layer, const Tensor& h) {
  const auto& ps = m.params();
  const auto& lp = m.layer(layer);
  const Tensor q = matmul(h, ps.value(lp.lin_q)), k = matmul(h, ps.value(lp.lin_k)),
               v = matmul(h, ps.value(lp.lin_v)), g = matmul(h, ps.value(lp.lin_gate_w)),
               be = matmul(h, ps.value(lp.lin_beta_w));
  const Tensor& gb = ps.value(lp.lin_gate_b);
  const Tensor& bb = ps.value(lp.lin_beta_b);
  const std::size_t T = h.rows(), dh = static_cast<std::size_t>(m.spec().head_dim());
  Tensor cat({T, static_cast<std::size_t>(m.spec().width)});
  for (std::size_t hd = 0; hd < static_cast<std::size_t>(m.spec().heads); ++hd) {
    std::vector<std::vector<double>> S(dh, std::vector<double>(dh, 0.0));  // S[value][key]
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> kh(dh);
      double nrm = 0.0;
      for (std::size_t c = 0; c < dh; ++c) nrm += k.at(t, hd * dh + c) * k.at(t, hd * dh + c);
      nrm = std::sqrt(nrm) + 1e-8;
      for (std::size_t c = 0; c < dh; ++c) kh[c] = k.at(t, hd * dh + c) / nrm;
      const double gt = sigmoid(g.at(t, hd) + gb[hd]);
      const double bt = sigmoid(be.at(t, hd) + bb[hd]);
      std::vector<double> pred(dh, 0.0);
      for (std::size_t i = 0; i < dh; ++i)
        for (std::size_t j = 0; j < dh; ++j) pred[i] += S[i][j] * kh[j];
      for (std::size_t i = 0; i < dh; ++i)
        for (std::size_t j = 0; j < dh; ++j)
          S[i][j] = gt * S[i][j] + bt * (v.at(t, hd * dh + i) - pred[i]) * kh[j];
      for (std::size_t i = 0; i < dh; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < dh; ++j) y += S[i][j] * q.at(t, hd * dh + j);
        cat.at(t, hd * dh + i) = y;
      }
    }
  }
  return matmul(cat, ps.value(lp.lin_o));
}

// KL(softmax(p/tau) || softmax(q/tau)) * tau^2 averaged over rows.
inline double naive_kl(const Tensor& teacher, const Tensor& student, double tau) {
  double total = 0.0;
  for (std::size_t r = 0; r < teacher.rows(); ++r) {
    std::vector<double> p(teacher.cols()), q(teacher.cols());
    double zp = 0.0, zq = 0.0;
    for (std::size_t c = 0; c < teacher.cols(); ++c) {
      zp += (p[c] = std::exp(teacher.at(r, c) / tau));
      zq += (q[c] = std::exp(student.at(r, c) / tau));
    }
    for (std::size_t c = 0; c < teacher.cols(); ++c) total += p[c] / zp * std::log((p[c] / zp) / (q[c] / zq));
  }
  return tau * tau * total / static_cast<double>(teacher.rows());
}

// Evaluates one mixer on a constant input through the library.
template <class Fn>
Tensor run_op(const Model& m, const Tensor& h, Fn&& fn) {
  ad::Tape t;
  Binder b(t, m.params(), Trainable::kNone);
  return t.value(fn(b, t.constant(h)));
}

}  // namespace dash::testing

namespace dash::testing {

struct AlphaFd {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

// Central differences of the search loss in every alpha entry against the
// analytic alpha gradient.
inline AlphaFd alpha_fd(const Model& m, const ArchState& state, std::span<const int> tokens,
                        const SearchConfig& cfg, double step = 1e-5, double floor = 1e-6) {
  const auto ev = evaluate_search_loss(m, state, tokens, cfg);
  AlphaFd r;
  for (std::size_t i = 0; i < state.alpha.size(); ++i) {
    ArchState hi = state, lo = state;
    hi.alpha[i] += step;
    lo.alpha[i] -= step;
    const double num =
        (evaluate_search_loss(m, hi, tokens, cfg).loss - evaluate_search_loss(m, lo, tokens, cfg).loss) / (2 * step);
    const double a = ev.alpha_grad[i];
    r.max_rel_error = std::max(r.max_rel_error, std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}));
    r.max_abs_grad = std::max(r.max_abs_grad, std::abs(a));
  }
  return r;
}

}  // namespace dash::testing
