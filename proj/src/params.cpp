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

#include "dash/params.hpp"

#include <cstring>

#include "dash/error.hpp"

namespace dash {
namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= kFnvPrime;
  }
}

}  // namespace

ParamKey ParamStore::add(std::string name, Tensor init) {
  if (index_.count(name)) fail(ErrorCode::kInvalidArgument, "duplicate parameter '" + name + "'");
  const auto k = static_cast<ParamKey>(values_.size());
  index_.emplace(name, k);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return k;
}

bool ParamStore::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

ParamKey ParamStore::key(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::uint64_t ParamStore::hash() const {
  return hash_where([](std::string_view) { return true; });
}

std::uint64_t ParamStore::hash_where(bool (*keep)(std::string_view name)) const {
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!keep(names_[i])) continue;
    fnv_bytes(h, names_[i].data(), names_[i].size());
    for (auto d : values_[i].shape) fnv_bytes(h, &d, sizeof d);
    fnv_bytes(h, values_[i].data.data(), values_[i].data.size() * sizeof(double));
  }
  return h;
}

}  // namespace dash
