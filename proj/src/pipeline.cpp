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

#include "dash/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dash/baselines.hpp"
#include "dash/checkpoint.hpp"
#include "dash/error.hpp"

namespace dash {
namespace fs = std::filesystem;

namespace {

constexpr char kCorpusMagic[8] = {'D', 'A', 'S', 'H', 'T', 'O', 'K', '1'};

enum SeedTag : std::uint64_t {
  kTagCorpus = 1,
  kTagTeacherInit,
  kTagTeacherData,
  kTagAlignData,
  kTagHeldout,
  kTagDistillData,
  kTagRecall,
};

std::string path_in(const RunConfig& cfg, const char* file) { return (fs::path(cfg.out_dir) / file).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

struct Data {
  TokenSeq stream;
  CorpusSplit split;
  std::vector<TokenSeq> heldout;
};

Data load_data(const RunConfig& cfg) {
  Data d;
  int vocab = 0;
  d.stream = read_corpus(path_in(cfg, "corpus.bin"), &vocab);
  if (vocab != cfg.model.vocab) {
    fail(ErrorCode::kConfig, "corpus vocab " + std::to_string(vocab) + " does not match model.vocab " +
                                 std::to_string(cfg.model.vocab));
  }
  d.split = split_corpus(d.stream, cfg.heldout_fraction);
  d.heldout = heldout_windows(d.split.heldout, cfg.eval.heldout_windows, cfg.eval.seq_len,
                              derive_seed(cfg.seed, kTagHeldout));
  return d;
}

Model load_model(const RunConfig& cfg, const char* file, Checkpoint* out = nullptr) {
  Checkpoint ck = load_checkpoint(path_in(cfg, file));
  if (!(ck.spec == cfg.model)) fail(ErrorCode::kConfig, std::string(file) + ": model spec differs from config");
  Model m = ck.model();
  if (out) *out = std::move(ck);
  return m;
}

void save_model(const Model& m, const RunConfig& cfg, const char* file, const std::string& stage, std::int64_t step,
                std::optional<HybridArch> arch = std::nullopt, std::optional<ArchState> alpha = std::nullopt) {
  Checkpoint ck = Checkpoint::of(m, CheckpointMeta{stage, step, cfg.seed});
  ck.arch = std::move(arch);
  ck.alpha = std::move(alpha);
  save_checkpoint(ck, path_in(cfg, file));
}

std::string curve_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream os;
  write_loss_curve(os, curve);
  return os.str();
}

std::string search_log_csv(const std::vector<SearchLogRow>& log) {
  std::ostringstream os;
  os.precision(10);
  os << "step,L_KL,L_cost,L_search,T_arch\n";
  for (const auto& r : log) os << r.step << ',' << r.kl << ',' << r.cost << ',' << r.loss << ',' << r.temperature << '\n';
  return os.str();
}

std::string diagnostics_csv(const RoutingDiagnostics& d) {
  std::ostringstream os;
  os.precision(10);
  os << "layer,entropy,top1,margin,ambiguous\n";
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    const auto& l = d.layers[i];
    os << i + 1 << ',' << l.entropy << ',' << l.top1 << ',' << l.margin << ',' << (l.margin < kAmbiguousMargin)
       << '\n';
  }
  return os.str();
}

SearchConfig search_config(const RunConfig& cfg, double lambda, std::uint64_t seed) {
  SearchConfig s = cfg.search;
  s.lambda = lambda;
  s.seed = seed;
  return s;
}

TrainConfig stage_config(TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finaliser over a combined state.
  std::uint64_t z = base * 0x9E3779B97F4A7C15ull + tag + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void write_corpus(const std::string& path, std::span<const int> tokens, int vocab) {
  if (vocab < 1 || vocab > 65536) fail(ErrorCode::kInvalidArgument, "corpus: vocab out of range");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(kCorpusMagic, sizeof kCorpusMagic);
  const std::uint32_t v = static_cast<std::uint32_t>(vocab);
  const std::uint64_t n = tokens.size();
  unsigned char buf[8];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(n >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
  std::vector<unsigned char> body(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab) fail(ErrorCode::kInvalidArgument, "corpus: token out of range");
    body[2 * i] = static_cast<unsigned char>(tokens[i] & 0xFF);
    body[2 * i + 1] = static_cast<unsigned char>(tokens[i] >> 8);
  }
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

TokenSeq read_corpus(const std::string& path, int* vocab) {
  const std::string raw = read_text(path);
  if (raw.size() < 20 || std::memcmp(raw.data(), kCorpusMagic, 8) != 0) {
    fail(ErrorCode::kCorrupt, "corpus '" + path + "': bad header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  std::uint32_t v = 0;
  std::uint64_t n = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[8 + i]) << (8 * i);
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(p[12 + i]) << (8 * i);
  if (raw.size() - 20 != n * 2) fail(ErrorCode::kCorrupt, "corpus '" + path + "': truncated token data");
  TokenSeq out(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    out[i] = p[20 + 2 * i] | (p[21 + 2 * i] << 8);
    if (static_cast<std::uint32_t>(out[i]) >= v) fail(ErrorCode::kCorrupt, "corpus '" + path + "': token out of range");
  }
  if (vocab) *vocab = static_cast<int>(v);
  return out;
}

std::vector<TokenSeq> heldout_windows(std::span<const int> heldout, int count, int seq_len, std::uint64_t seed) {
  WindowSampler s(heldout, static_cast<std::size_t>(seq_len), seed);
  return s.batch(static_cast<std::size_t>(count));
}

int worker_threads() {
  if (const char* env = std::getenv("DASH_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SweepRecord run_sweep_point(const Model& aligned, std::span<const int> train, std::span<const TokenSeq> heldout,
                            const RunConfig& cfg, double lambda, std::uint64_t seed) {
  SweepRecord rec;
  rec.lambda = lambda;
  rec.seed = seed;
  try {
    const SearchResult res = run_search(aligned, train, search_config(cfg, lambda, seed));
    rec.arch = res.arch;
    rec.budget = res.budget;
    rec.avg_entropy = res.diagnostics.avg_entropy;
    rec.avg_top1 = res.diagnostics.avg_top1;
    rec.avg_margin = res.diagnostics.avg_margin;
    rec.ambiguous = res.diagnostics.ambiguous;
    if (cfg.sweep.distill_steps > 0) {
      Model student = aligned;
      TrainConfig d = stage_config(cfg.distill, derive_seed(seed, kTagDistillData));
      d.steps = cfg.sweep.distill_steps;
      run_training(student, &aligned, res.arch, d, train);
      rec.heldout_kl = eval_heldout_kl(student, res.arch, aligned, heldout);
    } else {
      rec.heldout_kl = eval_heldout_kl(aligned, res.arch, aligned, heldout);
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.arch = HybridArch{};
  }
  return rec;
}

std::vector<SweepRecord> run_sweep(const Model& aligned, std::span<const int> train,
                                   std::span<const TokenSeq> heldout, const RunConfig& cfg, int threads,
                                   const std::function<void(const SweepRecord&)>& on_done) {
  struct Point {
    double lambda;
    std::uint64_t seed;
  };
  std::vector<Point> grid;
  for (double l : cfg.sweep.lambdas)
    for (std::uint64_t s : cfg.sweep.seeds) grid.push_back({l, s});
  std::vector<SweepRecord> out(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      out[i] = run_sweep_point(aligned, train, heldout, cfg, grid[i].lambda, grid[i].seed);
      if (on_done) {
        std::lock_guard lock(mu);
        on_done(out[i]);
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(grid.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

BudgetMatch search_at_budget(const Model& model, std::span<const int> stream, SearchConfig cfg, int n_full,
                             double lambda_lo, double lambda_hi, int max_searches) {
  if (n_full < 0 || n_full > model.spec().layers - 1) fail(ErrorCode::kInvalidArgument, "search_at_budget: bad target");
  if (!(lambda_lo > 0.0 && lambda_hi > lambda_lo)) fail(ErrorCode::kInvalidArgument, "search_at_budget: bad bracket");
  BudgetMatch best;
  int best_gap = std::numeric_limits<int>::max();
  double lo = std::log(lambda_lo), hi = std::log(lambda_hi);
  for (int i = 0; i < max_searches; ++i) {
    cfg.lambda = std::exp(0.5 * (lo + hi));
    SearchResult r = run_search(model, stream, cfg);
    const int nf = r.arch.count(OperatorKind::kFull);
    const int gap = std::abs(nf - n_full);
    if (gap < best_gap) {
      best_gap = gap;
      best.result = std::move(r);
      best.lambda = cfg.lambda;
    }
    best.searches = i + 1;
    if (gap == 0) return best;
    // More FULL layers than wanted means the cost weight is too small.
    if (nf > n_full) lo = std::log(cfg.lambda);
    else hi = std::log(cfg.lambda);
  }
  // Keep the n_full searchable layers with the highest final p_FULL.
  auto& res = best.result;
  std::vector<std::pair<double, int>> pf;
  for (int s = 0; s < res.state.searchable(); ++s) pf.push_back({-res.state.probs(s)[0], s + 1});
  std::sort(pf.begin(), pf.end());
  for (int l = 1; l < res.arch.layers(); ++l) {
    if (res.arch.ops[static_cast<std::size_t>(l)] == OperatorKind::kFull) {
      res.arch.ops[static_cast<std::size_t>(l)] = OperatorKind::kLinear;
    }
  }
  for (int i = 0; i < n_full; ++i) res.arch.ops[static_cast<std::size_t>(pf[static_cast<std::size_t>(i)].second)] = OperatorKind::kFull;
  res.budget = realized_budget(res.arch, model.spec().window, cfg.seq_len);
  best.projected = true;
  return best;
}

namespace stages {

void gen_corpus(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  CorpusGenerator gen(cfg.corpus, derive_seed(cfg.seed, kTagCorpus));
  const TokenSeq stream = gen.generate(cfg.corpus_tokens);
  write_corpus(path_in(cfg, "corpus.bin"), stream, cfg.corpus.vocab);
}

void train_teacher(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  std::vector<LossPoint> curve;
  TrainConfig t = stage_config(cfg.teacher, derive_seed(cfg.seed, kTagTeacherData));
  t.stage = Stage::kTeacher;
  const Model teacher = dash::train_teacher(cfg.model, t, d.split.train, derive_seed(cfg.seed, kTagTeacherInit), &curve);
  write_text(path_in(cfg, "teacher_loss.csv"), curve_csv(curve));
  save_model(teacher, cfg, "teacher.ckpt", "teacher", t.steps, HybridArch::all(cfg.model.layers, OperatorKind::kFull));
}

void align(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  const Model teacher = load_model(cfg, "teacher.ckpt");
  Model student = teacher;
  student.seed_linear_from_attention();
  TrainConfig a = stage_config(cfg.align, derive_seed(cfg.seed, kTagAlignData));
  a.stage = Stage::kAlign;
  const auto res = run_training(student, &teacher, HybridArch::all(cfg.model.layers, OperatorKind::kLinear), a,
                                d.split.train);
  write_text(path_in(cfg, "align_loss.csv"), curve_csv(res.curve));
  save_model(student, cfg, "aligned.ckpt", "align", a.steps);
}

void search(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  const Model aligned = load_model(cfg, "aligned.ckpt");
  const SearchConfig s = search_config(cfg, cfg.search.lambda, cfg.seed);
  const SearchResult res = run_search(aligned, d.split.train, s);
  write_text(path_in(cfg, "search_log.csv"), search_log_csv(res.log));
  write_text(path_in(cfg, "arch.txt"), res.arch.to_string() + "\n");
  write_text(path_in(cfg, "diagnostics.csv"), diagnostics_csv(res.diagnostics));
  std::ostringstream info;
  info.precision(10);
  info << "arch " << res.arch.to_string() << "\nbudget " << res.budget << "\navg_entropy "
       << res.diagnostics.avg_entropy << "\navg_top1 " << res.diagnostics.avg_top1 << "\navg_margin "
       << res.diagnostics.avg_margin << "\nambiguous " << res.diagnostics.ambiguous << "\n";
  write_text(path_in(cfg, "search.txt"), info.str());
  save_model(aligned, cfg, "search.ckpt", "search", s.micro_steps, res.arch, res.state);
}

bool sweep(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  const Model aligned = load_model(cfg, "aligned.ckpt");
  const auto records = run_sweep(aligned, d.split.train, d.heldout, cfg, worker_threads(), [](const SweepRecord& r) {
    std::cerr << "sweep lambda=" << r.lambda << " seed=" << r.seed << ": "
              << (r.ok ? r.arch.to_string() : "FAILED " + r.error) << "\n";
  });
  write_text(path_in(cfg, "sweep.csv"), sweep_csv(records));
  write_text(path_in(cfg, "sweep_runs.csv"), sweep_runs_csv(records));
  bool ok = true;
  for (const auto& r : records) ok = ok && r.ok;
  return ok;
}

void distill(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  const Model aligned = load_model(cfg, "aligned.ckpt");
  const HybridArch arch = HybridArch::parse(trim(read_text(path_in(cfg, "arch.txt"))));
  if (arch.layers() != cfg.model.layers) fail(ErrorCode::kConfig, "arch.txt: layer count differs from model.layers");
  Model student = aligned;
  TrainConfig t = stage_config(cfg.distill, derive_seed(cfg.seed, kTagDistillData));
  t.stage = Stage::kDistill;
  const auto res = run_training(student, &aligned, arch, t, d.split.train);
  write_text(path_in(cfg, "distill_loss.csv"), curve_csv(res.curve));
  save_model(student, cfg, "student.ckpt", "distill", t.steps, arch);
}

void eval(const RunConfig& cfg) {
  const Data d = load_data(cfg);
  const Model teacher = load_model(cfg, "teacher.ckpt");
  Checkpoint ck;
  const Model student = load_model(cfg, "student.ckpt", &ck);
  if (!ck.arch) fail(ErrorCode::kCorrupt, "student.ckpt: no architecture recorded");
  RecallTaskSpec task = cfg.eval.recall;
  task.seed = derive_seed(cfg.seed, kTagRecall);
  const EvalReport r = evaluate_model(student, *ck.arch, teacher, d.heldout, cfg.corpus, task, cfg.search.seq_len);
  write_text(path_in(cfg, "eval.csv"), eval_csv_header() + "\n" + eval_csv_row(r) + "\n");
  write_text(path_in(cfg, "eval.txt"), eval_text(r));
}

void report(const RunConfig& cfg) {
  std::vector<SweepRecord> records;
  const std::string runs = path_in(cfg, "sweep_runs.csv");
  if (fs::exists(runs)) records = parse_sweep_runs_csv(read_text(runs));
  std::vector<LabeledArch> extra;
  const std::string arch = path_in(cfg, "arch.txt");
  if (fs::exists(arch)) extra.push_back({"search", HybridArch::parse(trim(read_text(arch)))});
  const auto files = emit_report(records, extra, cfg.model.window, cfg.search.seq_len, cfg.out_dir);
  if (files.empty) std::cerr << "report: empty report (no sweep records or architectures)\n";
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {"gen-corpus", "train-teacher", "align", "search",
                                             "sweep",      "distill",       "eval",  "report"};
  return n;
}

bool run(std::string_view name, const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  if (name == "gen-corpus") gen_corpus(cfg);
  else if (name == "train-teacher") train_teacher(cfg);
  else if (name == "align") align(cfg);
  else if (name == "search") search(cfg);
  else if (name == "sweep") return sweep(cfg);
  else if (name == "distill") distill(cfg);
  else if (name == "eval") eval(cfg);
  else if (name == "report") report(cfg);
  else fail(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
  return true;
}

}  // namespace stages
}  // namespace dash
