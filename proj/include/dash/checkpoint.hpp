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
#include <optional>
#include <string>

#include "dash/arch_search.hpp"
#include "dash/model.hpp"

namespace dash {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string stage;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

/// JSON document: format version, model spec, named tensors stored as
/// base64 little-endian float32, optional architecture and routing logits.
struct Checkpoint {
  ModelSpec spec;
  ParamStore params;
  std::optional<HybridArch> arch;
  std::optional<ArchState> alpha;
  CheckpointMeta meta;

  static Checkpoint of(const Model& m, CheckpointMeta meta);
  Model model() const { return Model::from_store(spec, params); }
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

// kIo when the file cannot be read or written, kCorrupt for malformed
// content, kVersion for an unsupported format version.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Base64 of float32 little-endian values.
std::string encode_f32(const std::vector<double>& values);
std::vector<double> decode_f32(const std::string& text, std::size_t expected);

}  // namespace dash
