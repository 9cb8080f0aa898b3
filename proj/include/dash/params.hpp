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
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dash/autodiff.hpp"
#include "dash/tensor.hpp"

namespace dash {

using ad::ParamKey;

/// Named parameter tensors addressed by a stable integer key.
class ParamStore {
 public:
  ParamKey add(std::string name, Tensor init);
  bool contains(std::string_view name) const;
  ParamKey key(std::string_view name) const;

  const Tensor& value(ParamKey k) const { return values_.at(k); }
  Tensor& mutable_value(ParamKey k) { return values_.at(k); }
  const std::string& name(ParamKey k) const { return names_.at(k); }
  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;

  // FNV-1a over names, shapes and the raw bits of every value.
  std::uint64_t hash() const;
  std::uint64_t hash_where(bool (*keep)(std::string_view name)) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamKey> index_;
};

}  // namespace dash
