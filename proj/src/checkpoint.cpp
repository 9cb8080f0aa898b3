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

#include "dash/checkpoint.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dash/error.hpp"
#include "json.hpp"

namespace dash {
namespace {

using json = nlohmann::json;
namespace it = boost::archive::iterators;

std::string base64_encode(const std::string& bytes) {
  using Enc = it::base64_from_binary<it::transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(Enc(bytes.begin()), Enc(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(std::string text) {
  using Dec = it::transform_width<it::binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) fail(ErrorCode::kCorrupt, "checkpoint: base64 length is not a multiple of 4");
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  if (pad > 2) fail(ErrorCode::kCorrupt, "checkpoint: bad base64 padding");
  try {
    std::string out(Dec(text.begin()), Dec(text.end()));
    // transform_width emits whole bytes only; trailing partial bits are padding.
    return out;
  } catch (const std::exception&) {
    fail(ErrorCode::kCorrupt, "checkpoint: invalid base64 payload");
  }
}

void put_f32le(std::string& out, float f) {
  auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

float get_f32le(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

json spec_json(const ModelSpec& s) {
  return {{"layers", s.layers}, {"width", s.width},     {"heads", s.heads},      {"vocab", s.vocab},
          {"max_seq", s.max_seq}, {"window", s.window}, {"ffn_mult", s.ffn_mult}};
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.layers = j.at("layers").get<int>();
  s.width = j.at("width").get<int>();
  s.heads = j.at("heads").get<int>();
  s.vocab = j.at("vocab").get<int>();
  s.max_seq = j.at("max_seq").get<int>();
  s.window = j.at("window").get<int>();
  s.ffn_mult = j.at("ffn_mult").get<int>();
  return s;
}

Shape shape_from(const json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::size_t>());
  return s;
}

}  // namespace

std::string encode_f32(const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (double v : values) put_f32le(bytes, static_cast<float>(v));
  return base64_encode(bytes);
}

std::vector<double> decode_f32(const std::string& text, std::size_t expected) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() != expected * 4) {
    fail(ErrorCode::kCorrupt, "checkpoint: tensor payload holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(expected * 4));
  }
  std::vector<double> out(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < expected; ++i) out[i] = static_cast<double>(get_f32le(p + 4 * i));
  return out;
}

Checkpoint Checkpoint::of(const Model& m, CheckpointMeta meta) {
  Checkpoint c;
  c.spec = m.spec();
  c.params = m.params();
  c.meta = std::move(meta);
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json j;
  j["format"] = "dash-checkpoint";
  j["format_version"] = kCheckpointVersion;
  j["model_spec"] = spec_json(ckpt.spec);
  json tensors = json::array();
  for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
    const auto key = static_cast<ParamKey>(k);
    const Tensor& t = ckpt.params.value(key);
    tensors.push_back({{"name", ckpt.params.name(key)}, {"shape", t.shape}, {"data", encode_f32(t.data)}});
  }
  j["tensors"] = std::move(tensors);
  j["arch"] = ckpt.arch ? json(ckpt.arch->to_string()) : json(nullptr);
  if (ckpt.alpha) {
    j["alpha"] = {{"space", to_string(ckpt.alpha->space)},
                  {"layers", ckpt.alpha->layers},
                  {"temperature", ckpt.alpha->temperature},
                  {"shape", ckpt.alpha->alpha.shape},
                  {"data", encode_f32(ckpt.alpha->alpha.data)}};
  } else {
    j["alpha"] = nullptr;
  }
  j["metadata"] = {{"stage", ckpt.meta.stage}, {"step", ckpt.meta.step}, {"seed", ckpt.meta.seed}};
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kCorrupt, std::string("checkpoint: malformed JSON (") + e.what() + ")");
  }
  try {
    if (!j.is_object() || j.value("format", "") != "dash-checkpoint") {
      fail(ErrorCode::kCorrupt, "checkpoint: not a dash checkpoint");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      fail(ErrorCode::kVersion, "checkpoint: file has format version " + std::to_string(version) +
                                    ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    Checkpoint c;
    c.spec = spec_from(j.at("model_spec"));
    for (const auto& t : j.at("tensors")) {
      Shape s = shape_from(t.at("shape"));
      const auto n = numel(s);
      c.params.add(t.at("name").get<std::string>(), Tensor(std::move(s), decode_f32(t.at("data").get<std::string>(), n)));
    }
    if (!j.at("arch").is_null()) c.arch = HybridArch::parse(j.at("arch").get<std::string>());
    if (!j.at("alpha").is_null()) {
      const auto& a = j.at("alpha");
      ArchState st;
      st.space = parse_candidate_space(a.at("space").get<std::string>());
      st.layers = a.at("layers").get<int>();
      st.temperature = a.at("temperature").get<double>();
      Shape s = shape_from(a.at("shape"));
      const auto n = numel(s);
      st.alpha = Tensor(std::move(s), decode_f32(a.at("data").get<std::string>(), n));
      c.alpha = std::move(st);
    }
    const auto& m = j.at("metadata");
    c.meta.stage = m.at("stage").get<std::string>();
    c.meta.step = m.at("step").get<std::int64_t>();
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kVersion || e.code() == ErrorCode::kCorrupt) throw;
    fail(ErrorCode::kCorrupt, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string text = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "checkpoint: cannot open '" + path + "' for writing");
  out << text;
  if (!out.flush()) fail(ErrorCode::kIo, "checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "checkpoint: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "checkpoint: read of '" + path + "' failed");
  return parse_checkpoint(ss.str());
}

}  // namespace dash
