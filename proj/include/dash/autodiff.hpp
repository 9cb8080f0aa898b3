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
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "dash/tensor.hpp"

namespace dash::ad {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

using ParamKey = std::uint32_t;
using GradientMap = std::map<ParamKey, Tensor>;

enum class Op : std::uint8_t {
  kConstant,
  kLeaf,
  kMatMul,
  kAdd,
  kAddBias,
  kSub,
  kMul,
  kScale,
  kMulScalar,
  kIndex,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kL2Normalize,
  kSigmoid,
  kSilu,
  kSum,
  kMean,
  kSqFrobenius,
  kEmbedding,
  kSliceRows,
  kSliceCols,
  kConcatCols,
  kKlRows,
  kDeltaScan,
};

const char* op_name(Op op);

class Tape;
using BackwardFn = std::function<void(Tape&, NodeId self)>;

/// Eagerly evaluated reverse-mode tape. Nodes are appended in topological
/// order; backward() walks them once in reverse.
class Tape {
 public:
  NodeId constant(Tensor value);
  // A leaf tied to an external parameter. Frozen leaves never receive
  // gradient; they still appear in the gradient map as zeros.
  NodeId leaf(Tensor value, ParamKey key, bool trainable);

  const Tensor& value(NodeId id) const { return nodes_[id.index].value; }
  const Shape& shape(NodeId id) const { return nodes_[id.index].value.shape; }
  bool requires_grad(NodeId id) const { return nodes_[id.index].requires_grad; }
  Op op(NodeId id) const { return nodes_[id.index].op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[id.index].inputs; }
  std::size_t size() const { return nodes_.size(); }

  GradientMap backward(NodeId loss);

  // Primitive plumbing.
  NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, BackwardFn fn);
  const Tensor& grad(NodeId id) const { return grads_[id.index]; }
  // Zero-initialised on first access during backward.
  Tensor& grad_acc(NodeId id);

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    ParamKey key = 0;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// ---- primitives -----------------------------------------------------------
// Shape rules: `rows x cols` refers to (product of leading axes) x (last axis).

// [m,k] x [k,n] -> [m,n]; transpose flags apply to the operands.
NodeId matmul(Tape& t, NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false);
NodeId add(Tape& t, NodeId a, NodeId b);
// x [R,C] + bias [C] broadcast over rows.
NodeId add_bias(Tape& t, NodeId x, NodeId bias);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId x, double factor);
// x * s where s holds a single element.
NodeId mul_scalar(Tape& t, NodeId x, NodeId s);
// Flat element i as a scalar node.
NodeId index(Tape& t, NodeId v, std::size_t i);

inline constexpr double kMaskedLogit = -1e9;
using Mask = std::shared_ptr<const Tensor>;
// Softmax over the last axis of x + mask. Rows whose every entry is masked
// produce zeros. A null mask means no masking.
NodeId softmax(Tape& t, NodeId x, Mask mask = nullptr);
NodeId log_softmax(Tape& t, NodeId x);

inline constexpr double kLayerNormEps = 1e-5;
// Row-wise normalisation with affine gain/bias of length cols.
NodeId layer_norm(Tape& t, NodeId x, NodeId gain, NodeId bias);
inline constexpr double kL2Eps = 1e-8;
// x_r / (||x_r|| + eps) per row.
NodeId l2_normalize_rows(Tape& t, NodeId x);
NodeId sigmoid(Tape& t, NodeId x);
NodeId silu(Tape& t, NodeId x);

NodeId sum(Tape& t, NodeId x);
NodeId mean(Tape& t, NodeId x);
NodeId sq_frobenius(Tape& t, NodeId x);

// Rows of a [V,d] table -> [n,d].
NodeId embedding(Tape& t, NodeId table, std::span<const int> ids);
NodeId slice_rows(Tape& t, NodeId x, std::size_t begin, std::size_t count);
NodeId slice_cols(Tape& t, NodeId x, std::size_t begin, std::size_t count);
NodeId concat_cols(Tape& t, std::span<const NodeId> parts);

// (tau^2 / rows) * sum_r KL(softmax(target_r/tau) || softmax(student_r/tau)).
NodeId kl_rows(Tape& t, NodeId target_logits, NodeId student_logits, double tau);

// Gated delta-rule scan for one head. q,k,v: [T,dh]; gate, beta: [T,1].
// State M (dh x dh, value-by-key) starts at zero:
//   M_t = g_t M_{t-1} + beta_t (v_t - M_{t-1} k_t) k_t^T,   y_t = M_t q_t.
// Keys are expected to be normalised by the caller.
NodeId delta_scan(Tape& t, NodeId q, NodeId k, NodeId v, NodeId gate, NodeId beta);

// ---- verification ----------------------------------------------------------

struct FdReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<NodeId(Tape&, NodeId x)>;

// Central differences against backward(). Relative error per coordinate is
// |a - n| / max(|a|, |n|, abs_floor).
FdReport finite_difference_check(const ScalarFn& fn, const Tensor& point, double step, double tol,
                                 double abs_floor = 1e-6);

}  // namespace dash::ad
