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

#include "dash/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "dash/error.hpp"

namespace dash::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& x, std::size_t r, std::size_t c) {
  return MapC(x.data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MapM as_mat(Tensor& x, std::size_t r, std::size_t c) {
  return MapM(x.data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  fail(ErrorCode::kShape, std::string(op_name(op)) + ": " + detail);
}

void require_rank2(Op op, const Tensor& x, const char* what) {
  if (x.rank() != 2) shape_error(op, std::string(what) + " must be rank 2, got " + shape_str(x.shape));
}

void require_same(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_error(op, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Stable log-softmax of one row into out.
void log_softmax_row(const double* in, double* out, std::size_t n, double inv_tau) {
  double m = -INFINITY;
  for (std::size_t j = 0; j < n; ++j) m = std::max(m, in[j] * inv_tau);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(in[j] * inv_tau - m);
  const double lse = m + std::log(s);
  for (std::size_t j = 0; j < n; ++j) out[j] = in[j] * inv_tau - lse;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kAddBias: return "add_bias";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kIndex: return "index";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kL2Normalize: return "l2_normalize_rows";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSilu: return "silu";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSqFrobenius: return "sq_frobenius";
    case Op::kEmbedding: return "embedding";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kConcatCols: return "concat_cols";
    case Op::kKlRows: return "kl_rows";
    case Op::kDeltaScan: return "delta_scan";
  }
  return "?";
}

// ---- Tape -----------------------------------------------------------------

NodeId Tape::constant(Tensor value) {
  Node n{Op::kConstant, {}, std::move(value), false, true, 0, {}};
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::leaf(Tensor value, ParamKey key, bool trainable) {
  Node n{Op::kLeaf, {}, std::move(value), trainable, true, key, {}};
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::push(Op op, std::vector<NodeId> inputs, Tensor value, BackwardFn fn) {
  bool rg = false;
  for (auto in : inputs) rg = rg || nodes_[in.index].requires_grad;
  Node n{op, std::move(inputs), std::move(value), rg, false, 0, rg ? std::move(fn) : BackwardFn{}};
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_acc(NodeId id) {
  Tensor& g = grads_[id.index];
  if (g.data.empty() && nodes_[id.index].value.size() != 0) g = Tensor(nodes_[id.index].value.shape);
  return g;
}

GradientMap Tape::backward(NodeId loss) {
  if (!value(loss).shape.empty()) {
    fail(ErrorCode::kShape, "backward: loss must be a scalar, got shape " + shape_str(value(loss).shape));
  }
  grads_.assign(nodes_.size(), Tensor{});
  if (requires_grad(loss)) grad_acc(loss).data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.is_leaf || grads_[i].data.empty()) continue;
    n.backward(*this, NodeId{static_cast<std::uint32_t>(i)});
  }
  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::kLeaf) continue;
    auto [it, inserted] = out.try_emplace(n.key, Tensor(n.value.shape));
    if (!grads_[i].data.empty()) {
      for (std::size_t j = 0; j < grads_[i].size(); ++j) it->second.data[j] += grads_[i].data[j];
    }
  }
  return out;
}

// ---- primitives -------------------------------------------------------------

NodeId matmul(Tape& t, NodeId a, NodeId b, bool ta, bool tb) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  require_rank2(Op::kMatMul, A, "lhs");
  require_rank2(Op::kMatMul, B, "rhs");
  const std::size_t m = ta ? A.shape[1] : A.shape[0];
  const std::size_t k = ta ? A.shape[0] : A.shape[1];
  const std::size_t kb = tb ? B.shape[1] : B.shape[0];
  const std::size_t n = tb ? B.shape[0] : B.shape[1];
  if (k != kb) {
    shape_error(Op::kMatMul, "inner dimensions differ: " + shape_str(A.shape) + (ta ? "^T" : "") + " x " +
                                 shape_str(B.shape) + (tb ? "^T" : ""));
  }
  Tensor out({m, n});
  auto Am = as_mat(A, A.shape[0], A.shape[1]);
  auto Bm = as_mat(B, B.shape[0], B.shape[1]);
  auto O = as_mat(out, m, n);
  if (!ta && !tb) O.noalias() = Am * Bm;
  else if (ta && !tb) O.noalias() = Am.transpose() * Bm;
  else if (!ta && tb) O.noalias() = Am * Bm.transpose();
  else O.noalias() = Am.transpose() * Bm.transpose();
  return t.push(Op::kMatMul, {a, b}, std::move(out), [a, b, ta, tb](Tape& tp, NodeId self) {
    const Tensor& A = tp.value(a);
    const Tensor& B = tp.value(b);
    const Tensor& G = tp.grad(self);
    auto Am = as_mat(A, A.shape[0], A.shape[1]);
    auto Bm = as_mat(B, B.shape[0], B.shape[1]);
    auto Gm = as_mat(G, G.shape[0], G.shape[1]);
    if (tp.requires_grad(a)) {
      Tensor& GA = tp.grad_acc(a);
      auto GAm = as_mat(GA, A.shape[0], A.shape[1]);
      // op(A) = G op(B)^T
      if (!ta) {
        if (!tb) GAm.noalias() += Gm * Bm.transpose();
        else GAm.noalias() += Gm * Bm;
      } else {
        if (!tb) GAm.noalias() += Bm * Gm.transpose();
        else GAm.noalias() += Bm.transpose() * Gm.transpose();
      }
    }
    if (tp.requires_grad(b)) {
      Tensor& GB = tp.grad_acc(b);
      auto GBm = as_mat(GB, B.shape[0], B.shape[1]);
      // op(B) = op(A)^T G
      if (!tb) {
        if (!ta) GBm.noalias() += Am.transpose() * Gm;
        else GBm.noalias() += Am * Gm;
      } else {
        if (!ta) GBm.noalias() += Gm.transpose() * Am;
        else GBm.noalias() += Gm.transpose() * Am.transpose();
      }
    }
  });
}

NodeId add(Tape& t, NodeId a, NodeId b) {
  require_same(Op::kAdd, t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& B = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return t.push(Op::kAdd, {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    for (NodeId in : {a, b}) {
      if (!tp.requires_grad(in)) continue;
      Tensor& g = tp.grad_acc(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
  });
}

NodeId add_bias(Tape& t, NodeId x, NodeId bias) {
  const Tensor& X = t.value(x);
  const Tensor& B = t.value(bias);
  const std::size_t C = X.cols();
  if (X.rank() == 0 || B.shape != Shape{C}) {
    shape_error(Op::kAddBias, "input " + shape_str(X.shape) + " bias " + shape_str(B.shape));
  }
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % C];
  return t.push(Op::kAddBias, {x, bias}, std::move(out), [x, bias, C](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(x)) {
      Tensor& g = tp.grad_acc(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (tp.requires_grad(bias)) {
      Tensor& g = tp.grad_acc(bias);
      for (std::size_t i = 0; i < G.size(); ++i) g[i % C] += G[i];
    }
  });
}

NodeId sub(Tape& t, NodeId a, NodeId b) {
  require_same(Op::kSub, t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& B = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return t.push(Op::kSub, {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(a)) {
      Tensor& g = tp.grad_acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& g = tp.grad_acc(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= G[i];
    }
  });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
  require_same(Op::kMul, t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& B = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return t.push(Op::kMul, {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(a)) {
      const Tensor& B = tp.value(b);
      Tensor& g = tp.grad_acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * B[i];
    }
    if (tp.requires_grad(b)) {
      const Tensor& A = tp.value(a);
      Tensor& g = tp.grad_acc(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * A[i];
    }
  });
}

NodeId scale(Tape& t, NodeId x, double factor) {
  Tensor out = t.value(x);
  for (auto& v : out.data) v *= factor;
  return t.push(Op::kScale, {x}, std::move(out), [x, factor](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * factor;
  });
}

NodeId mul_scalar(Tape& t, NodeId x, NodeId s) {
  if (t.value(s).size() != 1) {
    shape_error(Op::kMulScalar, "scale operand must hold one element, got " + shape_str(t.value(s).shape));
  }
  const double sv = t.value(s)[0];
  Tensor out = t.value(x);
  for (auto& v : out.data) v *= sv;
  return t.push(Op::kMulScalar, {x, s}, std::move(out), [x, s](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(x)) {
      const double sv = tp.value(s)[0];
      Tensor& g = tp.grad_acc(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * sv;
    }
    if (tp.requires_grad(s)) {
      const Tensor& X = tp.value(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < X.size(); ++i) acc += G[i] * X[i];
      tp.grad_acc(s)[0] += acc;
    }
  });
}

NodeId index(Tape& t, NodeId v, std::size_t i) {
  const Tensor& V = t.value(v);
  if (i >= V.size()) {
    shape_error(Op::kIndex, "flat index " + std::to_string(i) + " into " + shape_str(V.shape));
  }
  return t.push(Op::kIndex, {v}, Tensor::scalar(V[i]), [v, i](Tape& tp, NodeId self) {
    tp.grad_acc(v)[i] += tp.grad(self)[0];
  });
}

NodeId softmax(Tape& t, NodeId x, Mask mask) {
  const Tensor& X = t.value(x);
  if (mask && mask->shape != X.shape) {
    shape_error(Op::kSoftmax, "mask " + shape_str(mask->shape) + " does not match input " + shape_str(X.shape));
  }
  if (X.rank() == 0) shape_error(Op::kSoftmax, "input must have at least one axis");
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out(X.shape);
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = &X.data[r * C];
    const double* mk = mask ? &mask->data[r * C] : nullptr;
    double* o = &out.data[r * C];
    bool all_masked = mk != nullptr;
    double m = -INFINITY;
    for (std::size_t j = 0; j < C; ++j) {
      const double v = in[j] + (mk ? mk[j] : 0.0);
      if (!mk || mk[j] > kMaskedLogit * 0.5) all_masked = false;
      m = std::max(m, v);
    }
    if (all_masked) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      o[j] = std::exp(in[j] + (mk ? mk[j] : 0.0) - m);
      s += o[j];
    }
    for (std::size_t j = 0; j < C; ++j) o[j] /= s;
  }
  return t.push(Op::kSoftmax, {x}, std::move(out), [x](Tape& tp, NodeId self) {
    const Tensor& Y = tp.value(self);
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    const std::size_t R = Y.rows(), C = Y.cols();
    for (std::size_t r = 0; r < R; ++r) {
      const double* y = &Y.data[r * C];
      const double* gy = &G.data[r * C];
      double dot = 0.0;
      for (std::size_t j = 0; j < C; ++j) dot += gy[j] * y[j];
      double* gx = &g.data[r * C];
      for (std::size_t j = 0; j < C; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

NodeId log_softmax(Tape& t, NodeId x) {
  const Tensor& X = t.value(x);
  if (X.rank() == 0) shape_error(Op::kLogSoftmax, "input must have at least one axis");
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out(X.shape);
  for (std::size_t r = 0; r < R; ++r) log_softmax_row(&X.data[r * C], &out.data[r * C], C, 1.0);
  return t.push(Op::kLogSoftmax, {x}, std::move(out), [x](Tape& tp, NodeId self) {
    const Tensor& Y = tp.value(self);
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    const std::size_t R = Y.rows(), C = Y.cols();
    for (std::size_t r = 0; r < R; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < C; ++j) gs += G.data[r * C + j];
      for (std::size_t j = 0; j < C; ++j) {
        g.data[r * C + j] += G.data[r * C + j] - std::exp(Y.data[r * C + j]) * gs;
      }
    }
  });
}

NodeId layer_norm(Tape& t, NodeId x, NodeId gain, NodeId bias) {
  const Tensor& X = t.value(x);
  const Tensor& Gn = t.value(gain);
  const Tensor& Bs = t.value(bias);
  const std::size_t R = X.rows(), C = X.cols();
  if (X.rank() == 0 || Gn.shape != Shape{C} || Bs.shape != Shape{C}) {
    shape_error(Op::kLayerNorm, "input " + shape_str(X.shape) + " gain " + shape_str(Gn.shape) + " bias " +
                                    shape_str(Bs.shape));
  }
  // Cache of normalised rows and inverse std devs for backward.
  auto xhat = std::make_shared<Tensor>(X.shape);
  auto inv_std = std::make_shared<std::vector<double>>(R);
  Tensor out(X.shape);
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = &X.data[r * C];
    const auto [lo, hi] = std::minmax_element(in, in + C);
    double mu = 0.0;
    for (std::size_t j = 0; j < C; ++j) mu += in[j];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t j = 0; j < C; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[r] = is;
    const bool constant_row = *lo == *hi;
    for (std::size_t j = 0; j < C; ++j) {
      const double xh = constant_row ? 0.0 : (in[j] - mu) * is;
      xhat->data[r * C + j] = xh;
      out.data[r * C + j] = Gn[j] * xh + Bs[j];
    }
  }
  return t.push(Op::kLayerNorm, {x, gain, bias}, std::move(out),
                [x, gain, bias, xhat, inv_std](Tape& tp, NodeId self) {
                  const Tensor& G = tp.grad(self);
                  const Tensor& Gn = tp.value(gain);
                  const std::size_t R = xhat->rows(), C = xhat->cols();
                  if (tp.requires_grad(gain)) {
                    Tensor& gg = tp.grad_acc(gain);
                    for (std::size_t r = 0; r < R; ++r)
                      for (std::size_t j = 0; j < C; ++j) gg[j] += G.data[r * C + j] * xhat->data[r * C + j];
                  }
                  if (tp.requires_grad(bias)) {
                    Tensor& gb = tp.grad_acc(bias);
                    for (std::size_t r = 0; r < R; ++r)
                      for (std::size_t j = 0; j < C; ++j) gb[j] += G.data[r * C + j];
                  }
                  if (tp.requires_grad(x)) {
                    Tensor& gx = tp.grad_acc(x);
                    std::vector<double> dxh(C);
                    for (std::size_t r = 0; r < R; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < C; ++j) {
                        dxh[j] = G.data[r * C + j] * Gn[j];
                        m1 += dxh[j];
                        m2 += dxh[j] * xhat->data[r * C + j];
                      }
                      m1 /= static_cast<double>(C);
                      m2 /= static_cast<double>(C);
                      const double is = (*inv_std)[r];
                      for (std::size_t j = 0; j < C; ++j) {
                        gx.data[r * C + j] += is * (dxh[j] - m1 - xhat->data[r * C + j] * m2);
                      }
                    }
                  }
                });
}

NodeId l2_normalize_rows(Tape& t, NodeId x) {
  const Tensor& X = t.value(x);
  const std::size_t R = X.rows(), C = X.cols();
  auto norms = std::make_shared<std::vector<double>>(R);
  Tensor out(X.shape);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) s += X.data[r * C + j] * X.data[r * C + j];
    const double n = std::sqrt(s);
    (*norms)[r] = n;
    for (std::size_t j = 0; j < C; ++j) out.data[r * C + j] = X.data[r * C + j] / (n + kL2Eps);
  }
  return t.push(Op::kL2Normalize, {x}, std::move(out), [x, norms](Tape& tp, NodeId self) {
    const Tensor& X = tp.value(x);
    const Tensor& G = tp.grad(self);
    Tensor& gx = tp.grad_acc(x);
    const std::size_t R = X.rows(), C = X.cols();
    for (std::size_t r = 0; r < R; ++r) {
      const double n = (*norms)[r];
      const double d = n + kL2Eps;
      double xg = 0.0;
      for (std::size_t j = 0; j < C; ++j) xg += X.data[r * C + j] * G.data[r * C + j];
      const double coef = n > 0.0 ? xg / (d * d * n) : 0.0;
      for (std::size_t j = 0; j < C; ++j) {
        gx.data[r * C + j] += G.data[r * C + j] / d - X.data[r * C + j] * coef;
      }
    }
  });
}

NodeId sigmoid(Tape& t, NodeId x) {
  Tensor out = t.value(x);
  for (auto& v : out.data) v = sigmoid_scalar(v);
  return t.push(Op::kSigmoid, {x}, std::move(out), [x](Tape& tp, NodeId self) {
    const Tensor& Y = tp.value(self);
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i] * (1.0 - Y[i]);
  });
}

NodeId silu(Tape& t, NodeId x) {
  Tensor out = t.value(x);
  for (auto& v : out.data) v = v * sigmoid_scalar(v);
  return t.push(Op::kSilu, {x}, std::move(out), [x](Tape& tp, NodeId self) {
    const Tensor& X = tp.value(x);
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid_scalar(X[i]);
      g[i] += G[i] * s * (1.0 + X[i] * (1.0 - s));
    }
  });
}

NodeId sum(Tape& t, NodeId x) {
  double s = 0.0;
  for (double v : t.value(x).data) s += v;
  return t.push(Op::kSum, {x}, Tensor::scalar(s), [x](Tape& tp, NodeId self) {
    const double G = tp.grad(self)[0];
    for (auto& v : tp.grad_acc(x).data) v += G;
  });
}

NodeId mean(Tape& t, NodeId x) {
  const Tensor& X = t.value(x);
  if (X.size() == 0) shape_error(Op::kMean, "empty input");
  double s = 0.0;
  for (double v : X.data) s += v;
  const double n = static_cast<double>(X.size());
  return t.push(Op::kMean, {x}, Tensor::scalar(s / n), [x, n](Tape& tp, NodeId self) {
    const double G = tp.grad(self)[0] / n;
    for (auto& v : tp.grad_acc(x).data) v += G;
  });
}

NodeId sq_frobenius(Tape& t, NodeId x) {
  double s = 0.0;
  for (double v : t.value(x).data) s += v * v;
  return t.push(Op::kSqFrobenius, {x}, Tensor::scalar(s), [x](Tape& tp, NodeId self) {
    const double G = tp.grad(self)[0];
    const Tensor& X = tp.value(x);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * G * X[i];
  });
}

NodeId embedding(Tape& t, NodeId table, std::span<const int> ids) {
  const Tensor& W = t.value(table);
  require_rank2(Op::kEmbedding, W, "table");
  const std::size_t V = W.shape[0], d = W.shape[1];
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= V) {
      fail(ErrorCode::kInvalidArgument,
           "embedding: id " + std::to_string(ids[r]) + " out of range for table " + shape_str(W.shape));
    }
    std::copy_n(&W.data[ids[r] * d], d, &out.data[r * d]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return t.push(Op::kEmbedding, {table}, std::move(out), [table, idv = std::move(idv), d](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(table);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g.data[idv[r] * d + j] += G.data[r * d + j];
  });
}

NodeId slice_rows(Tape& t, NodeId x, std::size_t begin, std::size_t count) {
  const Tensor& X = t.value(x);
  require_rank2(Op::kSliceRows, X, "input");
  if (begin + count > X.shape[0] || count == 0) {
    shape_error(Op::kSliceRows, "rows [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                                    ") of " + shape_str(X.shape));
  }
  const std::size_t C = X.shape[1];
  Tensor out({count, C});
  std::copy_n(&X.data[begin * C], count * C, out.data.begin());
  return t.push(Op::kSliceRows, {x}, std::move(out), [x, begin, count, C](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t i = 0; i < count * C; ++i) g.data[begin * C + i] += G.data[i];
  });
}

NodeId slice_cols(Tape& t, NodeId x, std::size_t begin, std::size_t count) {
  const Tensor& X = t.value(x);
  require_rank2(Op::kSliceCols, X, "input");
  if (begin + count > X.shape[1] || count == 0) {
    shape_error(Op::kSliceCols, "cols [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                                    ") of " + shape_str(X.shape));
  }
  const std::size_t R = X.shape[0], C = X.shape[1];
  Tensor out({R, count});
  for (std::size_t r = 0; r < R; ++r) std::copy_n(&X.data[r * C + begin], count, &out.data[r * count]);
  return t.push(Op::kSliceCols, {x}, std::move(out), [x, begin, count, R, C](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    Tensor& g = tp.grad_acc(x);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < count; ++j) g.data[r * C + begin + j] += G.data[r * count + j];
  });
}

NodeId concat_cols(Tape& t, std::span<const NodeId> parts) {
  if (parts.empty()) shape_error(Op::kConcatCols, "no inputs");
  const std::size_t R = t.value(parts[0]).rows();
  std::size_t C = 0;
  for (auto p : parts) {
    const Tensor& P = t.value(p);
    require_rank2(Op::kConcatCols, P, "part");
    if (P.shape[0] != R) {
      shape_error(Op::kConcatCols, "row count mismatch " + shape_str(P.shape) + " vs " + std::to_string(R));
    }
    C += P.shape[1];
  }
  Tensor out({R, C});
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& P = t.value(p);
    const std::size_t c = P.shape[1];
    for (std::size_t r = 0; r < R; ++r) std::copy_n(&P.data[r * c], c, &out.data[r * C + off]);
    off += c;
  }
  std::vector<NodeId> in(parts.begin(), parts.end());
  return t.push(Op::kConcatCols, in, std::move(out), [in, R, C](Tape& tp, NodeId self) {
    const Tensor& G = tp.grad(self);
    std::size_t off = 0;
    for (auto p : in) {
      const std::size_t c = tp.shape(p)[1];
      if (tp.requires_grad(p)) {
        Tensor& g = tp.grad_acc(p);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t j = 0; j < c; ++j) g.data[r * c + j] += G.data[r * C + off + j];
      }
      off += c;
    }
  });
}

NodeId kl_rows(Tape& t, NodeId target_logits, NodeId student_logits, double tau) {
  const Tensor& Zt = t.value(target_logits);
  const Tensor& Zs = t.value(student_logits);
  require_same(Op::kKlRows, Zt, Zs);
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidArgument, "kl_rows: tau must be positive");
  if (Zt.rank() == 0) shape_error(Op::kKlRows, "logits need at least one axis");
  const std::size_t R = Zt.rows(), C = Zt.cols();
  auto lp = std::make_shared<Tensor>(Zt.shape);
  auto lq = std::make_shared<Tensor>(Zt.shape);
  auto row_kl = std::make_shared<std::vector<double>>(R);
  double total = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    log_softmax_row(&Zt.data[r * C], &lp->data[r * C], C, 1.0 / tau);
    log_softmax_row(&Zs.data[r * C], &lq->data[r * C], C, 1.0 / tau);
    double kl = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      const double a = lp->data[r * C + j];
      kl += std::exp(a) * (a - lq->data[r * C + j]);
    }
    (*row_kl)[r] = kl;
    total += kl;
  }
  const double factor = tau * tau / static_cast<double>(R);
  return t.push(Op::kKlRows, {target_logits, student_logits}, Tensor::scalar(factor * total),
                [target_logits, student_logits, tau, factor, lp, lq, row_kl](Tape& tp, NodeId self) {
                  const double G = tp.grad(self)[0] * factor / tau;
                  const std::size_t R = lp->rows(), C = lp->cols();
                  if (tp.requires_grad(student_logits)) {
                    Tensor& g = tp.grad_acc(student_logits);
                    for (std::size_t i = 0; i < R * C; ++i) g.data[i] += G * (std::exp(lq->data[i]) - std::exp(lp->data[i]));
                  }
                  if (tp.requires_grad(target_logits)) {
                    Tensor& g = tp.grad_acc(target_logits);
                    for (std::size_t r = 0; r < R; ++r)
                      for (std::size_t j = 0; j < C; ++j) {
                        const std::size_t i = r * C + j;
                        g.data[i] += G * std::exp(lp->data[i]) * (lp->data[i] - lq->data[i] - (*row_kl)[r]);
                      }
                  }
                });
}

NodeId delta_scan(Tape& t, NodeId q, NodeId k, NodeId v, NodeId gate, NodeId beta) {
  const Tensor& Q = t.value(q);
  const Tensor& K = t.value(k);
  const Tensor& V = t.value(v);
  const Tensor& Gt = t.value(gate);
  const Tensor& Bt = t.value(beta);
  require_rank2(Op::kDeltaScan, Q, "q");
  require_same(Op::kDeltaScan, Q, K);
  require_same(Op::kDeltaScan, Q, V);
  const std::size_t T = Q.shape[0], D = Q.shape[1];
  if (Gt.shape != Shape{T, 1} || Bt.shape != Shape{T, 1}) {
    shape_error(Op::kDeltaScan, "gate " + shape_str(Gt.shape) + " / beta " + shape_str(Bt.shape) +
                                    " must be [" + std::to_string(T) + ",1]");
  }
  // states[t] holds M_t for t = 0..T (M_0 = 0); errs[t-1] holds v_t - M_{t-1} k_t.
  auto states = std::make_shared<std::vector<double>>((T + 1) * D * D, 0.0);
  auto errs = std::make_shared<std::vector<double>>(T * D, 0.0);
  Tensor out({T, D});
  for (std::size_t s = 0; s < T; ++s) {
    const double* prev = &(*states)[s * D * D];
    double* cur = &(*states)[(s + 1) * D * D];
    const double* kk = &K.data[s * D];
    const double* vv = &V.data[s * D];
    const double* qq = &Q.data[s * D];
    const double g = Gt[s], b = Bt[s];
    double* e = &(*errs)[s * D];
    for (std::size_t i = 0; i < D; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < D; ++j) r += prev[i * D + j] * kk[j];
      e[i] = vv[i] - r;
    }
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) cur[i * D + j] = g * prev[i * D + j] + b * e[i] * kk[j];
    for (std::size_t i = 0; i < D; ++i) {
      double y = 0.0;
      for (std::size_t j = 0; j < D; ++j) y += cur[i * D + j] * qq[j];
      out.data[s * D + i] = y;
    }
  }
  return t.push(Op::kDeltaScan, {q, k, v, gate, beta}, std::move(out),
                [q, k, v, gate, beta, states, errs, T, D](Tape& tp, NodeId self) {
                  const Tensor& Q = tp.value(q);
                  const Tensor& K = tp.value(k);
                  const Tensor& Gt = tp.value(gate);
                  const Tensor& Bt = tp.value(beta);
                  const Tensor& Gy = tp.grad(self);
                  std::vector<double> dq(T * D, 0.0), dk(T * D, 0.0), dv(T * D, 0.0), dg(T, 0.0), db(T, 0.0);
                  std::vector<double> dM(D * D, 0.0), de(D);
                  for (std::size_t s = T; s-- > 0;) {
                    const double* prev = &(*states)[s * D * D];
                    const double* cur = &(*states)[(s + 1) * D * D];
                    const double* kk = &K.data[s * D];
                    const double* qq = &Q.data[s * D];
                    const double* gy = &Gy.data[s * D];
                    const double* e = &(*errs)[s * D];
                    const double g = Gt[s], b = Bt[s];
                    for (std::size_t i = 0; i < D; ++i)
                      for (std::size_t j = 0; j < D; ++j) {
                        dM[i * D + j] += gy[i] * qq[j];
                        dq[s * D + j] += cur[i * D + j] * gy[i];
                      }
                    double sg = 0.0, sb = 0.0;
                    for (std::size_t i = 0; i < D; ++i) {
                      double dmk = 0.0;
                      for (std::size_t j = 0; j < D; ++j) {
                        sg += dM[i * D + j] * prev[i * D + j];
                        dmk += dM[i * D + j] * kk[j];
                      }
                      sb += e[i] * dmk;
                      de[i] = b * dmk;
                    }
                    dg[s] = sg;
                    db[s] = sb;
                    for (std::size_t j = 0; j < D; ++j) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < D; ++i) acc += b * dM[i * D + j] * e[i] - prev[i * D + j] * de[i];
                      dk[s * D + j] += acc;
                    }
                    for (std::size_t i = 0; i < D; ++i) dv[s * D + i] = de[i];
                    for (std::size_t i = 0; i < D; ++i)
                      for (std::size_t j = 0; j < D; ++j) dM[i * D + j] = g * dM[i * D + j] - de[i] * kk[j];
                  }
                  auto acc = [&tp](NodeId id, const std::vector<double>& d) {
                    if (!tp.requires_grad(id)) return;
                    Tensor& g = tp.grad_acc(id);
                    for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += d[i];
                  };
                  acc(q, dq);
                  acc(k, dk);
                  acc(v, dv);
                  acc(gate, dg);
                  acc(beta, db);
                });
}

FdReport finite_difference_check(const ScalarFn& fn, const Tensor& point, double step, double tol,
                                 double abs_floor) {
  if (!(step > 0.0)) fail(ErrorCode::kInvalidArgument, "finite_difference_check: step must be positive");
  Tensor analytic;
  {
    Tape tape;
    const NodeId x = tape.leaf(point, 0, true);
    const NodeId y = fn(tape, x);
    analytic = tape.backward(y).at(0);
  }
  auto eval = [&fn](const Tensor& p) {
    Tape tape;
    const NodeId x = tape.constant(p);
    return tape.value(fn(tape, x))[0];
  };
  FdReport rep;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double fp = eval(probe);
    probe[i] = point[i] - step;
    const double fm = eval(probe);
    probe[i] = point[i];
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
    if (i == 0 || rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
      rep.worst_analytic = a;
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

}  // namespace dash::ad
