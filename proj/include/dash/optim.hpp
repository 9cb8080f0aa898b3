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

#include <cstddef>
#include <map>

#include "dash/tensor.hpp"

namespace dash {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with decoupled weight decay. Moment buffers are
/// keyed by caller-chosen slot ids.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Advance the shared step counter; call once per optimizer step before
  // the per-slot updates.
  void begin_step() { ++t_; }
  void update(std::size_t slot, Tensor& param, const Tensor& grad, double lr, double weight_decay);
  int steps() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  std::map<std::size_t, Moments> slots_;
  int t_ = 0;
};

enum class LrSchedule { kCosine, kConstant };

// Cosine decays from base at step 0 to 0 at step == total.
double scheduled_lr(LrSchedule schedule, double base, int step, int total);

}  // namespace dash
