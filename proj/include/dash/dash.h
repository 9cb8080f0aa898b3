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

/* C interface to the search pipeline. Every call returns a dash_status; on
 * failure the message is available from dash_last_error() on the session,
 * or from dash_global_error() when no session exists. */
#ifndef DASH_DASH_H_
#define DASH_DASH_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DASH_BUILDING_LIBRARY)
#define DASH_API __attribute__((visibility("default")))
#else
#define DASH_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define DASH_ABI_VERSION 1

typedef enum dash_status {
  DASH_OK = 0,
  DASH_ERR_INVALID_ARGUMENT = 1,
  DASH_ERR_SHAPE = 2,
  DASH_ERR_CONFIG = 3,
  DASH_ERR_IO = 4,
  DASH_ERR_CORRUPT = 5,
  DASH_ERR_VERSION = 6,
  DASH_ERR_NUMERIC = 7,
  DASH_ERR_STATE = 8,
  DASH_ERR_FREEZE_VIOLATION = 9,
  DASH_ERR_PARTIAL = 10, /* a sweep finished with failed grid points */
  DASH_ERR_INTERNAL = 11
} dash_status;

typedef enum dash_operator { DASH_OP_FULL = 0, DASH_OP_WINDOW = 1, DASH_OP_LINEAR = 2 } dash_operator;

typedef struct dash_session dash_session;

typedef struct dash_routing_summary {
  double avg_entropy;
  double avg_top1;
  double avg_margin;
  int32_t ambiguous;
} dash_routing_summary;

DASH_API int32_t dash_abi_version(void);
DASH_API const char* dash_status_name(dash_status status);
DASH_API const char* dash_global_error(void);

/* config_path may be NULL for built-in defaults. */
DASH_API dash_status dash_session_create(const char* config_path, dash_session** out);
DASH_API void dash_session_destroy(dash_session* session);
DASH_API const char* dash_last_error(const dash_session* session);

DASH_API dash_status dash_set_seed(dash_session* session, uint64_t seed);
DASH_API dash_status dash_set_lambda(dash_session* session, double lambda);
/* "binary" or "tri". */
DASH_API dash_status dash_set_budget_space(dash_session* session, const char* space);
DASH_API dash_status dash_set_out_dir(dash_session* session, const char* dir);
/* Any documented "section.key". */
DASH_API dash_status dash_set_option(dash_session* session, const char* key, const char* value);

/* Writes the effective INI configuration into buf (NUL-terminated). *needed
 * receives the required size including the terminator. */
DASH_API dash_status dash_dump_config(const dash_session* session, char* buf, size_t cap, size_t* needed);

/* One of gen-corpus, train-teacher, align, search, sweep, distill, eval, report. */
DASH_API dash_status dash_run_stage(dash_session* session, const char* stage);

/* Stateless helpers. */
DASH_API dash_status dash_realized_budget(const int32_t* ops, size_t layers, int32_t window, int32_t seq_len,
                                          double* out);
/* probs is row-major [layers, k]. */
DASH_API dash_status dash_routing_diagnostics(const double* probs, size_t layers, size_t k,
                                              dash_routing_summary* out);
/* alpha is row-major [layers - 1, k] (k = 2 for binary, 3 for tri); ops_out
 * receives `layers` entries, layer 0 always LINEAR. */
DASH_API dash_status dash_discretize(const double* alpha, size_t layers, size_t k, int32_t* ops_out);
DASH_API dash_status dash_uniform_alloc(int32_t layers, int32_t budget, int32_t* ops_out);

#ifdef __cplusplus
}
#endif

#endif /* DASH_DASH_H_ */
