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

#include "dash/optim.hpp"

#include <cmath>
#include <numbers>

#include "dash/error.hpp"

namespace dash {

void AdamW::update(std::size_t slot, Tensor& param, const Tensor& grad, double lr, double weight_decay) {
  if (param.shape != grad.shape) {
    fail(ErrorCode::kShape, "AdamW: gradient " + shape_str(grad.shape) + " vs parameter " + shape_str(param.shape));
  }
  if (t_ == 0) fail(ErrorCode::kState, "AdamW: update before begin_step");
  auto [it, fresh] = slots_.try_emplace(slot);
  if (fresh) {
    it->second.m = Tensor(param.shape);
    it->second.v = Tensor(param.shape);
  }
  auto& m = it->second.m.data;
  auto& v = it->second.v.data;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    param[i] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + weight_decay * param[i]);
  }
}

double scheduled_lr(LrSchedule schedule, double base, int step, int total) {
  if (schedule == LrSchedule::kConstant || total <= 0) return base;
  const double frac = std::min(1.0, std::max(0.0, static_cast<double>(step) / total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace dash
