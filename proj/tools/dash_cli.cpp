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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dash/dash.h"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::string space;
  std::string out;
  std::vector<std::string> sets;
};

int report_failure(dash_session* s, dash_status st, const std::string& what) {
  std::cerr << "dash: " << what << " failed [" << dash_status_name(st) << "]: "
            << (s ? dash_last_error(s) : dash_global_error()) << "\n";
  return static_cast<int>(st);
}

int run(const Options& o, const std::string& stage) {
  dash_session* s = nullptr;
  dash_status st = dash_session_create(o.config.empty() ? nullptr : o.config.c_str(), &s);
  if (st != DASH_OK) return report_failure(nullptr, st, "loading config");
  struct Guard {
    dash_session* s;
    ~Guard() { dash_session_destroy(s); }
  } guard{s};

  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "dash: --set expects key=value, got '" << kv << "'\n";
      return static_cast<int>(DASH_ERR_INVALID_ARGUMENT);
    }
    st = dash_set_option(s, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != DASH_OK) return report_failure(s, st, "--set " + kv);
  }
  if (o.seed && (st = dash_set_seed(s, *o.seed)) != DASH_OK) return report_failure(s, st, "--seed");
  if (o.lambda && (st = dash_set_lambda(s, *o.lambda)) != DASH_OK) return report_failure(s, st, "--lambda");
  if (!o.space.empty() && (st = dash_set_budget_space(s, o.space.c_str())) != DASH_OK)
    return report_failure(s, st, "--budget-space");
  if (!o.out.empty() && (st = dash_set_out_dir(s, o.out.c_str())) != DASH_OK) return report_failure(s, st, "--out");

  if (stage == "show-config") {
    std::size_t need = 0;
    dash_dump_config(s, nullptr, 0, &need);
    std::string buf(need, '\0');
    if ((st = dash_dump_config(s, buf.data(), buf.size(), &need)) != DASH_OK) return report_failure(s, st, stage);
    std::cout << buf.c_str();
    return 0;
  }
  st = dash_run_stage(s, stage.c_str());
  if (st != DASH_OK) return report_failure(s, st, stage);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-attention architecture search pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Run seed");
  app.add_option("--lambda", o.lambda, "Cost weight for search");
  app.add_option("--budget-space", o.space, "Candidate operators")->check(CLI::IsMember({"binary", "tri"}));
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--set", o.sets, "Override a config entry, e.g. --set search.micro_steps=200");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-corpus", "Generate the synthetic token corpus"},
      {"train-teacher", "Train the full-attention teacher"},
      {"align", "Align linear-attention modules to the teacher"},
      {"search", "Run one architecture search"},
      {"sweep", "Search over the lambda x seed grid"},
      {"distill", "Distill the discovered architecture"},
      {"eval", "Evaluate the distilled student"},
      {"report", "Write sweep summaries and figures"},
      {"show-config", "Print the effective configuration"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->fallthrough();
  }
  CLI11_PARSE(app, argc, argv);
  return run(o, app.get_subcommands().front()->get_name());
}
