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

#include "dash/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "dash/error.hpp"

namespace dash {
namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* want) {
  fail(ErrorCode::kConfig, "config: '" + std::string(key) + "' = '" + std::string(value) + "' is not " + want);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_int(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  T out{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used != s.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  bad_value(key, v, "a boolean");
}

LrSchedule parse_schedule(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  if (s == "cosine") return LrSchedule::kCosine;
  if (s == "constant") return LrSchedule::kConstant;
  bad_value(key, v, "cosine or constant");
}

std::string fmt_real(double d) {
  // Shortest text that round-trips.
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view v, const std::function<T(std::string_view)>& item) {
  std::vector<T> out;
  std::string cur;
  const std::string s(v);
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    if (trim(cur).empty()) bad_value(key, v, "a comma-separated list");
    out.push_back(item(cur));
  }
  if (out.empty()) bad_value(key, v, "a non-empty list");
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DASH_INT(name, member)                                                                           \
  Field {                                                                                                \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_int<decltype(c.member)>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                      \
  }
#define DASH_REAL(name, member)                                                        \
  Field {                                                                              \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_real(name, v); },    \
        [](const RunConfig& c) { return fmt_real(c.member); }                          \
  }
#define DASH_SCHED(name, member)                                                              \
  Field {                                                                                     \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_schedule(name, v); },       \
        [](const RunConfig& c) {                                                              \
          return std::string(c.member == LrSchedule::kCosine ? "cosine" : "constant");        \
        }                                                                                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DASH_INT("run.seed", seed),
      Field{"run.out", [](RunConfig& c, std::string_view v) { c.out_dir = trim(v); },
            [](const RunConfig& c) { return c.out_dir; }},
      DASH_INT("model.layers", model.layers),
      DASH_INT("model.width", model.width),
      DASH_INT("model.heads", model.heads),
      Field{"model.vocab",
            [](RunConfig& c, std::string_view v) {
              c.model.vocab = parse_int<int>("model.vocab", v);
              c.corpus.vocab = c.model.vocab;
            },
            [](const RunConfig& c) { return std::to_string(c.model.vocab); }},
      DASH_INT("model.max_seq", model.max_seq),
      DASH_INT("model.window", model.window),
      DASH_INT("model.ffn_mult", model.ffn_mult),
      DASH_INT("corpus.tokens", corpus_tokens),
      DASH_REAL("corpus.heldout_fraction", heldout_fraction),
      DASH_INT("corpus.branching", corpus.branching),
      DASH_REAL("corpus.recall_rate", corpus.recall_rate),
      DASH_INT("corpus.markov_run", corpus.markov_run),
      DASH_INT("corpus.recall_pairs", corpus.recall_pairs),
      DASH_INT("corpus.recall_gap", corpus.recall_gap),
      DASH_INT("corpus.table_seed", corpus.table_seed),
      DASH_INT("teacher.steps", teacher.steps),
      DASH_INT("teacher.batch", teacher.batch),
      DASH_INT("teacher.seq_len", teacher.seq_len),
      DASH_REAL("teacher.lr", teacher.lr_main),
      DASH_REAL("teacher.weight_decay", teacher.weight_decay),
      DASH_SCHED("teacher.schedule", teacher.schedule),
      DASH_INT("align.steps", align.steps),
      DASH_INT("align.batch", align.batch),
      DASH_INT("align.seq_len", align.seq_len),
      DASH_REAL("align.lr_attn", align.lr_attn),
      DASH_REAL("align.weight_decay", align.weight_decay),
      DASH_SCHED("align.schedule", align.schedule),
      DASH_REAL("search.lambda", search.lambda),
      DASH_REAL("search.tau", search.tau),
      DASH_INT("search.micro_steps", search.micro_steps),
      DASH_INT("search.grad_accum", search.grad_accum),
      DASH_INT("search.micro_batch", search.micro_batch),
      DASH_INT("search.seq_len", search.seq_len),
      DASH_REAL("search.lr_alpha", search.lr_alpha),
      DASH_REAL("search.t_initial", search.t_initial),
      DASH_REAL("search.t_final", search.t_final),
      DASH_INT("search.anneal_steps", search.anneal_steps),
      Field{"search.anneal", [](RunConfig& c, std::string_view v) { c.search.anneal = parse_bool("search.anneal", v); },
            [](const RunConfig& c) { return std::string(c.search.anneal ? "true" : "false"); }},
      Field{"search.space", [](RunConfig& c, std::string_view v) { c.search.space = parse_candidate_space(trim(v)); },
            [](const RunConfig& c) { return to_string(c.search.space); }},
      Field{"sweep.lambdas",
            [](RunConfig& c, std::string_view v) {
              c.sweep.lambdas = parse_list<double>("sweep.lambdas", v, [](std::string_view s) {
                return parse_real("sweep.lambdas", s);
              });
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.sweep.lambdas.size(); ++i) s += (i ? "," : "") + fmt_real(c.sweep.lambdas[i]);
              return s;
            }},
      Field{"sweep.seeds",
            [](RunConfig& c, std::string_view v) {
              c.sweep.seeds = parse_list<std::uint64_t>("sweep.seeds", v, [](std::string_view s) {
                return parse_int<std::uint64_t>("sweep.seeds", s);
              });
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.sweep.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.sweep.seeds[i]);
              return s;
            }},
      DASH_INT("sweep.distill_steps", sweep.distill_steps),
      DASH_INT("distill.steps", distill.steps),
      DASH_INT("distill.batch", distill.batch),
      DASH_INT("distill.seq_len", distill.seq_len),
      DASH_REAL("distill.lr_main", distill.lr_main),
      DASH_REAL("distill.lr_attn", distill.lr_attn),
      DASH_REAL("distill.weight_decay", distill.weight_decay),
      DASH_SCHED("distill.schedule", distill.schedule),
      DASH_REAL("distill.tau", distill.tau),
      DASH_INT("eval.heldout_windows", eval.heldout_windows),
      DASH_INT("eval.seq_len", eval.seq_len),
      DASH_INT("eval.recall_pairs", eval.recall.pairs),
      DASH_INT("eval.recall_gap", eval.recall.gap),
      DASH_INT("eval.recall_trials", eval.recall.trials),
  };
  return f;
}

#undef DASH_INT
#undef DASH_REAL
#undef DASH_SCHED

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  fail(ErrorCode::kConfig, "config: unknown key '" + std::string(key) + "'");
}

}  // namespace

RunConfig::RunConfig() {
  teacher.stage = Stage::kTeacher;
  teacher.steps = 3000;
  teacher.batch = 8;
  teacher.seq_len = 128;
  teacher.lr_main = 3e-3;
  teacher.schedule = LrSchedule::kCosine;

  align.stage = Stage::kAlign;
  align.steps = 1000;
  align.batch = 8;
  align.seq_len = 128;
  align.lr_attn = 1e-3;
  align.schedule = LrSchedule::kCosine;

  distill.stage = Stage::kDistill;
  distill.steps = 2000;
  distill.batch = 8;
  distill.seq_len = 128;
  distill.lr_main = 3e-4;
  distill.lr_attn = 1e-3;
  distill.schedule = LrSchedule::kConstant;
}

RunConfig RunConfig::parse(std::string_view text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream is{std::string(text)};
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      fail(ErrorCode::kConfig, "config: key '" + section + "' must appear inside a [section]");
    }
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(std::string_view dotted_key, std::string_view value) { field(dotted_key).set(*this, value); }

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const auto& f : fields()) {
    const std::string k = f.key;
    const auto dot = k.find('.');
    const auto sec = k.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += k.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  model.validate();
  auto corpus_check = corpus;
  corpus_check.vocab = model.vocab;
  corpus_check.validate();
  if (corpus.vocab != model.vocab) fail(ErrorCode::kConfig, "config: corpus vocab must equal model vocab");
  if (corpus_tokens < 1000) fail(ErrorCode::kConfig, "config: corpus.tokens must be >= 1000");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 0.5)) {
    fail(ErrorCode::kConfig, "config: corpus.heldout_fraction must lie in (0, 0.5)");
  }
  teacher.validate();
  align.validate();
  distill.validate();
  search.validate();
  for (int len : {teacher.seq_len, align.seq_len, distill.seq_len, search.seq_len, eval.seq_len}) {
    if (len > model.max_seq) fail(ErrorCode::kConfig, "config: a seq_len exceeds model.max_seq");
  }
  if (sweep.lambdas.empty() || sweep.seeds.empty()) fail(ErrorCode::kConfig, "config: sweep grid is empty");
  for (double l : sweep.lambdas)
    if (!(l >= 0.0)) fail(ErrorCode::kConfig, "config: sweep lambdas must be >= 0");
  if (sweep.distill_steps < 0) fail(ErrorCode::kConfig, "config: sweep.distill_steps must be >= 0");
  if (eval.heldout_windows < 1 || eval.seq_len < 1 || eval.recall.trials < 1) {
    fail(ErrorCode::kConfig, "config: eval sizes must be >= 1");
  }
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  return k;
}

}  // namespace dash
