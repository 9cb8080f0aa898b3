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

#include "dash/dash.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "dash/arch_search.hpp"
#include "dash/baselines.hpp"
#include "dash/config.hpp"
#include "dash/error.hpp"
#include "dash/pipeline.hpp"

struct dash_session {
  dash::RunConfig cfg;
  std::string error;
};

namespace {

thread_local std::string g_error;

dash_status to_status(dash::ErrorCode code) {
  switch (code) {
    case dash::ErrorCode::kInvalidArgument: return DASH_ERR_INVALID_ARGUMENT;
    case dash::ErrorCode::kShape: return DASH_ERR_SHAPE;
    case dash::ErrorCode::kConfig: return DASH_ERR_CONFIG;
    case dash::ErrorCode::kIo: return DASH_ERR_IO;
    case dash::ErrorCode::kCorrupt: return DASH_ERR_CORRUPT;
    case dash::ErrorCode::kVersion: return DASH_ERR_VERSION;
    case dash::ErrorCode::kNumeric: return DASH_ERR_NUMERIC;
    case dash::ErrorCode::kState: return DASH_ERR_STATE;
    case dash::ErrorCode::kFreezeViolation: return DASH_ERR_FREEZE_VIOLATION;
  }
  return DASH_ERR_INTERNAL;
}

// Runs fn, translating exceptions into a status and a stored message.
template <class Fn>
dash_status guarded(std::string* err, Fn&& fn) {
  std::string& sink = err ? *err : g_error;
  try {
    const dash_status s = fn();
    if (s == DASH_OK) sink.clear();
    return s;
  } catch (const dash::Error& e) {
    sink = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    sink = "out of memory";
    return DASH_ERR_INTERNAL;
  } catch (const std::exception& e) {
    sink = e.what();
    return DASH_ERR_INTERNAL;
  }
}

dash_status reject(std::string* err, const char* what) {
  (err ? *err : g_error) = what;
  return DASH_ERR_INVALID_ARGUMENT;
}

void write_ops(const dash::HybridArch& a, int32_t* out) {
  for (std::size_t i = 0; i < a.ops.size(); ++i) out[i] = static_cast<int32_t>(a.ops[i]);
}

}  // namespace

extern "C" {

int32_t dash_abi_version(void) { return DASH_ABI_VERSION; }

const char* dash_status_name(dash_status status) {
  switch (status) {
    case DASH_OK: return "ok";
    case DASH_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DASH_ERR_SHAPE: return "shape";
    case DASH_ERR_CONFIG: return "config";
    case DASH_ERR_IO: return "io";
    case DASH_ERR_CORRUPT: return "corrupt";
    case DASH_ERR_VERSION: return "version";
    case DASH_ERR_NUMERIC: return "numeric";
    case DASH_ERR_STATE: return "state";
    case DASH_ERR_FREEZE_VIOLATION: return "freeze_violation";
    case DASH_ERR_PARTIAL: return "partial";
    case DASH_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* dash_global_error(void) { return g_error.c_str(); }

dash_status dash_session_create(const char* config_path, dash_session** out) {
  if (!out) return reject(nullptr, "dash_session_create: out is NULL");
  *out = nullptr;
  return guarded(nullptr, [&] {
    auto s = std::make_unique<dash_session>();
    if (config_path) s->cfg = dash::RunConfig::load(config_path);
    *out = s.release();
    return DASH_OK;
  });
}

void dash_session_destroy(dash_session* session) { delete session; }

const char* dash_last_error(const dash_session* session) {
  return session ? session->error.c_str() : g_error.c_str();
}

dash_status dash_set_seed(dash_session* session, uint64_t seed) {
  if (!session) return reject(nullptr, "session is NULL");
  session->cfg.seed = seed;
  return DASH_OK;
}

dash_status dash_set_lambda(dash_session* session, double lambda) {
  if (!session) return reject(nullptr, "session is NULL");
  return guarded(&session->error, [&] {
    dash::SearchConfig s = session->cfg.search;
    s.lambda = lambda;
    s.validate();
    session->cfg.search = s;
    return DASH_OK;
  });
}

dash_status dash_set_budget_space(dash_session* session, const char* space) {
  if (!session || !space) return reject(session ? &session->error : nullptr, "NULL argument");
  return guarded(&session->error, [&] {
    session->cfg.search.space = dash::parse_candidate_space(space);
    return DASH_OK;
  });
}

dash_status dash_set_out_dir(dash_session* session, const char* dir) {
  if (!session || !dir || !*dir) return reject(session ? &session->error : nullptr, "empty output directory");
  session->cfg.out_dir = dir;
  return DASH_OK;
}

dash_status dash_set_option(dash_session* session, const char* key, const char* value) {
  if (!session || !key || !value) return reject(session ? &session->error : nullptr, "NULL argument");
  return guarded(&session->error, [&] {
    session->cfg.set(key, value);
    return DASH_OK;
  });
}

dash_status dash_dump_config(const dash_session* session, char* buf, size_t cap, size_t* needed) {
  if (!session) return reject(nullptr, "session is NULL");
  return guarded(nullptr, [&] {
    const std::string ini = session->cfg.to_ini();
    if (needed) *needed = ini.size() + 1;
    if (!buf || cap < ini.size() + 1) {
      if (buf && cap) buf[0] = '\0';
      return buf ? DASH_ERR_INVALID_ARGUMENT : DASH_OK;
    }
    std::memcpy(buf, ini.c_str(), ini.size() + 1);
    return DASH_OK;
  });
}

dash_status dash_run_stage(dash_session* session, const char* stage) {
  if (!session || !stage) return reject(session ? &session->error : nullptr, "NULL argument");
  return guarded(&session->error, [&] {
    if (!dash::stages::run(stage, session->cfg)) {
      session->error = "sweep finished with failed grid points; see sweep_runs.csv";
      return DASH_ERR_PARTIAL;
    }
    return DASH_OK;
  });
}

dash_status dash_realized_budget(const int32_t* ops, size_t layers, int32_t window, int32_t seq_len, double* out) {
  if (!ops || !out || layers == 0) return reject(nullptr, "dash_realized_budget: bad arguments");
  return guarded(nullptr, [&] {
    dash::HybridArch a;
    for (size_t i = 0; i < layers; ++i) {
      if (ops[i] < 0 || ops[i] > 2) dash::fail(dash::ErrorCode::kInvalidArgument, "unknown operator id");
      a.ops.push_back(static_cast<dash::OperatorKind>(ops[i]));
    }
    *out = dash::realized_budget(a, window, seq_len);
    return DASH_OK;
  });
}

dash_status dash_routing_diagnostics(const double* probs, size_t layers, size_t k, dash_routing_summary* out) {
  if (!probs || !out || layers == 0 || k < 2) return reject(nullptr, "dash_routing_diagnostics: bad arguments");
  return guarded(nullptr, [&] {
    std::vector<std::vector<double>> p(layers, std::vector<double>(k));
    for (size_t i = 0; i < layers; ++i)
      for (size_t j = 0; j < k; ++j) p[i][j] = probs[i * k + j];
    const auto d = dash::routing_diagnostics(p);
    *out = dash_routing_summary{d.avg_entropy, d.avg_top1, d.avg_margin, d.ambiguous};
    return DASH_OK;
  });
}

dash_status dash_discretize(const double* alpha, size_t layers, size_t k, int32_t* ops_out) {
  if (!alpha || !ops_out || layers < 1 || (k != 2 && k != 3)) return reject(nullptr, "dash_discretize: bad arguments");
  return guarded(nullptr, [&] {
    auto st = dash::ArchState::uniform(static_cast<int>(layers), k == 2 ? dash::CandidateSpace::kBinary
                                                                       : dash::CandidateSpace::kTriState);
    std::copy(alpha, alpha + (layers - 1) * k, st.alpha.data.begin());
    write_ops(dash::discretize(st), ops_out);
    return DASH_OK;
  });
}

dash_status dash_uniform_alloc(int32_t layers, int32_t budget, int32_t* ops_out) {
  if (!ops_out) return reject(nullptr, "dash_uniform_alloc: ops_out is NULL");
  return guarded(nullptr, [&] {
    write_ops(dash::uniform_alloc(layers, budget), ops_out);
    return DASH_OK;
  });
}

}  // extern "C"
