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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "dash/dash.h"

namespace {

std::string dump(const dash_session* s) {
  size_t need = 0;
  REQUIRE(dash_dump_config(s, nullptr, 0, &need) == DASH_OK);
  std::string buf(need, '\0');
  REQUIRE(dash_dump_config(s, buf.data(), buf.size(), &need) == DASH_OK);
  return buf.c_str();
}

}  // namespace

TEST_CASE("versions and status names") {
  CHECK(dash_abi_version() == DASH_ABI_VERSION);
  CHECK(std::string(dash_status_name(DASH_OK)) == "ok");
  CHECK(std::string(dash_status_name(DASH_ERR_VERSION)) == "version");
  CHECK(std::string(dash_status_name(static_cast<dash_status>(99))) == "unknown");
}

TEST_CASE("session lifecycle and setters") {
  dash_session* s = nullptr;
  REQUIRE(dash_session_create(nullptr, &s) == DASH_OK);
  REQUIRE(s != nullptr);
  CHECK(dash_set_seed(s, 17) == DASH_OK);
  CHECK(dash_set_lambda(s, 0.0125) == DASH_OK);
  CHECK(dash_set_budget_space(s, "binary") == DASH_OK);
  CHECK(dash_set_out_dir(s, "/tmp/x") == DASH_OK);
  CHECK(dash_set_option(s, "search.micro_steps", "64") == DASH_OK);
  const std::string ini = dump(s);
  CHECK(ini.find("seed = 17") != std::string::npos);
  CHECK(ini.find("lambda = 0.0125") != std::string::npos);
  CHECK(ini.find("space = binary") != std::string::npos);
  CHECK(ini.find("micro_steps = 64") != std::string::npos);
  CHECK(ini.find("out = /tmp/x") != std::string::npos);

  CHECK(dash_set_option(s, "search.bogus", "1") == DASH_ERR_CONFIG);
  CHECK(std::string(dash_last_error(s)).find("bogus") != std::string::npos);
  CHECK(dash_set_lambda(s, -1.0) != DASH_OK);
  CHECK(dash_set_budget_space(s, "quad") != DASH_OK);
  CHECK(dash_set_out_dir(s, "") == DASH_ERR_INVALID_ARGUMENT);
  CHECK(dash_run_stage(s, "fly") == DASH_ERR_INVALID_ARGUMENT);
  char small[4];
  size_t need = 0;
  CHECK(dash_dump_config(s, small, sizeof small, &need) == DASH_ERR_INVALID_ARGUMENT);
  CHECK(need > sizeof small);
  dash_session_destroy(s);
  dash_session_destroy(nullptr);
}

TEST_CASE("config files and missing inputs") {
  dash_session* s = nullptr;
  CHECK(dash_session_create("/nonexistent/cfg.ini", &s) == DASH_ERR_IO);
  CHECK(s == nullptr);
  CHECK(std::string(dash_global_error()).find("cannot open") != std::string::npos);
  CHECK(dash_session_create(nullptr, nullptr) == DASH_ERR_INVALID_ARGUMENT);

  const auto dir = std::filesystem::temp_directory_path() / "dash_capi_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto cfg = (dir / "bad.ini").string();
  if (FILE* f = std::fopen(cfg.c_str(), "w")) {
    std::fputs("[model]\nunknown_key = 1\n", f);
    std::fclose(f);
  }
  CHECK(dash_session_create(cfg.c_str(), &s) == DASH_ERR_CONFIG);

  REQUIRE(dash_session_create(nullptr, &s) == DASH_OK);
  dash_set_out_dir(s, (dir / "empty").string().c_str());
  CHECK(dash_run_stage(s, "align") == DASH_ERR_IO);
  CHECK(dash_run_stage(s, "report") == DASH_OK);
  CHECK(std::filesystem::exists(dir / "empty" / "report_EMPTY.txt"));
  dash_session_destroy(s);
}

TEST_CASE("stateless helpers") {
  const int32_t ops[8] = {DASH_OP_LINEAR, DASH_OP_FULL, DASH_OP_WINDOW, DASH_OP_FULL,
                          DASH_OP_LINEAR, DASH_OP_WINDOW, DASH_OP_LINEAR, DASH_OP_FULL};
  double b = -1;
  CHECK(dash_realized_budget(ops, 8, 16, 128, &b) == DASH_OK);
  CHECK(b == 3.25);
  const int32_t bad[2] = {0, 7};
  CHECK(dash_realized_budget(bad, 2, 16, 128, &b) == DASH_ERR_INVALID_ARGUMENT);

  const double probs[6] = {1. / 3, 1. / 3, 1. / 3, 0.6, 0.3, 0.1};
  dash_routing_summary r{};
  CHECK(dash_routing_diagnostics(probs, 2, 3, &r) == DASH_OK);
  CHECK(std::abs(r.avg_entropy - 0.5 * (std::log(3.0) - 0.6 * std::log(0.6) - 0.3 * std::log(0.3) - 0.1 * std::log(0.1))) < 1e-12);
  CHECK(r.ambiguous == 1);

  const double alpha[9] = {0, 0, 5, 3, 0, 0, 0, 2, 1};
  int32_t out[4];
  CHECK(dash_discretize(alpha, 4, 3, out) == DASH_OK);
  CHECK(std::vector<int32_t>(out, out + 4) == std::vector<int32_t>{DASH_OP_LINEAR, DASH_OP_LINEAR, DASH_OP_FULL, DASH_OP_WINDOW});
  CHECK(dash_discretize(alpha, 4, 4, out) == DASH_ERR_INVALID_ARGUMENT);

  int32_t uni[8];
  CHECK(dash_uniform_alloc(8, 4, uni) == DASH_OK);
  CHECK(std::vector<int32_t>(uni, uni + 8) == std::vector<int32_t>{2, 0, 2, 0, 2, 0, 2, 0});
  CHECK(dash_uniform_alloc(8, 0, uni) == DASH_ERR_INVALID_ARGUMENT);
}
