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

#include "dash/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dash/error.hpp"

namespace dash {
namespace {

std::string num(double v, const char* f = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

const char* op_color(OperatorKind k) {
  switch (k) {
    case OperatorKind::kFull: return "#c0392b";
    case OperatorKind::kWindow: return "#e67e22";
    case OperatorKind::kLinear: return "#2e86c1";
  }
  return "#000000";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "report: cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string row(const SweepRecord& r) {
  if (!r.ok) return num(r.lambda) + "," + std::to_string(r.seed) + ",nan,nan,nan,nan,nan,nan";
  return num(r.lambda) + "," + std::to_string(r.seed) + "," + num(r.budget) + "," + num(r.avg_entropy) + "," +
         num(r.avg_top1) + "," + num(r.avg_margin) + "," + std::to_string(r.ambiguous) + "," + num(r.heldout_kl);
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::string out = "lambda,seed,budget,avg_entropy,avg_top1,avg_margin,ambiguous,heldout_kl\n";
  for (const auto& r : records) out += row(r) + "\n";
  return out;
}

std::string sweep_runs_csv(const std::vector<SweepRecord>& records) {
  std::string out = "lambda,seed,budget,avg_entropy,avg_top1,avg_margin,ambiguous,heldout_kl,arch,error\n";
  for (const auto& r : records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += row(r) + "," + r.arch.to_string() + "," + err + "\n";
  }
  return out;
}

std::vector<SweepRecord> parse_sweep_runs_csv(const std::string& text) {
  std::vector<SweepRecord> out;
  std::istringstream is(text);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 10) fail(ErrorCode::kCorrupt, "sweep runs: expected 10 fields in '" + line + "'");
    SweepRecord r;
    try {
      r.lambda = std::stod(f[0]);
      r.seed = std::stoull(f[1]);
      r.error = f[9];
      r.ok = r.error.empty();
      if (r.ok) {
        r.budget = std::stod(f[2]);
        r.avg_entropy = std::stod(f[3]);
        r.avg_top1 = std::stod(f[4]);
        r.avg_margin = std::stod(f[5]);
        r.ambiguous = std::stoi(f[6]);
        r.heldout_kl = std::stod(f[7]);
        r.arch = HybridArch::parse(f[8]);
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::kCorrupt, "sweep runs: bad number in '" + line + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string allocation_strip_svg(const std::vector<LabeledArch>& archs, int window, int seq_len) {
  constexpr int cell = 16, label_w = 150, budget_w = 90, pad = 10;
  int max_layers = 0;
  for (const auto& a : archs) max_layers = std::max(max_layers, a.arch.layers());
  const int width = pad * 2 + label_w + max_layers * cell + budget_w;
  const int height = pad * 2 + 18 + static_cast<int>(archs.size()) * (cell + 4);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  os << "<text x=\"" << pad << "\" y=\"" << pad + 10 << "\">layer allocation (F=full W=window L=linear)</text>\n";
  for (std::size_t i = 0; i < archs.size(); ++i) {
    const int y = pad + 18 + static_cast<int>(i) * (cell + 4);
    const auto& a = archs[i];
    os << "<text x=\"" << pad << "\" y=\"" << y + cell - 4 << "\">" << xml_escape(a.label) << "</text>\n";
    for (int l = 0; l < a.arch.layers(); ++l) {
      const auto k = a.arch.ops[static_cast<std::size_t>(l)];
      os << "<rect x=\"" << pad + label_w + l * cell << "\" y=\"" << y << "\" width=\"" << cell - 1
         << "\" height=\"" << cell << "\" fill=\"" << op_color(k) << "\"><title>layer " << l << ": " << mnemonic(k)
         << "</title></rect>\n";
    }
    os << "<text x=\"" << pad + label_w + max_layers * cell + 6 << "\" y=\"" << y + cell - 4 << "\">B="
       << num(realized_budget(a.arch, window, seq_len), "%g") << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

struct LambdaSummary {
  double lambda;
  double budget, kl;
  int runs;
};

std::vector<LambdaSummary> summarize(const std::vector<SweepRecord>& records) {
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> by;
  for (const auto& r : records) {
    if (!r.ok) continue;
    by[r.lambda].first.push_back(r.budget);
    by[r.lambda].second.push_back(r.heldout_kl);
  }
  std::vector<LambdaSummary> out;
  for (auto& [l, v] : by) out.push_back({l, median(v.first), median(v.second), static_cast<int>(v.first.size())});
  return out;
}

}  // namespace

std::string lambda_summary_csv(const std::vector<SweepRecord>& records) {
  std::string out = "lambda,median_budget,median_heldout_kl,runs\n";
  for (const auto& s : summarize(records)) {
    out += num(s.lambda) + "," + num(s.budget) + "," + num(s.kl) + "," + std::to_string(s.runs) + "\n";
  }
  return out;
}

std::string budget_kl_svg(const std::vector<SweepRecord>& records) {
  const auto sums = summarize(records);
  constexpr int W = 520, H = 300, left = 60, right = 60, top = 30, bottom = 50;
  const int pw = W - left - right, ph = H - top - bottom;
  double bmax = 1.0, kmax = 1e-12;
  for (const auto& s : sums) {
    bmax = std::max(bmax, s.budget);
    kmax = std::max(kmax, s.kl);
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  os << "<text x=\"" << left << "\" y=\"18\">realized budget (bars) and held-out KL (line) vs lambda</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"4\" y=\"" << top + 10 << "\">B " << num(bmax, "%g") << "</text>\n";
  os << "<text x=\"" << left + pw + 4 << "\" y=\"" << top + 10 << "\">KL " << num(kmax, "%.3g") << "</text>\n";
  const int n = static_cast<int>(sums.size());
  const double slot = n > 0 ? static_cast<double>(pw) / n : 0.0;
  std::string path;
  for (int i = 0; i < n; ++i) {
    const auto& s = sums[static_cast<std::size_t>(i)];
    const double bh = ph * (s.budget / bmax);
    const double x = left + slot * i + slot * 0.2;
    os << "<rect x=\"" << num(x, "%.2f") << "\" y=\"" << num(top + ph - bh, "%.2f") << "\" width=\""
       << num(slot * 0.6, "%.2f") << "\" height=\"" << num(bh, "%.2f") << "\" fill=\"#7f8c8d\"/>\n";
    os << "<text x=\"" << num(x, "%.2f") << "\" y=\"" << top + ph + 15 << "\">" << num(s.lambda, "%g") << "</text>\n";
    const double cx = left + slot * (i + 0.5);
    const double cy = top + ph - ph * (s.kl / kmax);
    path += (i ? " L " : "M ") + num(cx, "%.2f") + " " + num(cy, "%.2f");
    os << "<circle cx=\"" << num(cx, "%.2f") << "\" cy=\"" << num(cy, "%.2f") << "\" r=\"3\" fill=\"#c0392b\"/>\n";
  }
  if (!path.empty()) os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"#c0392b\"/>\n";
  os << "<text x=\"" << left + pw / 2 - 20 << "\" y=\"" << H - 10 << "\">lambda</text>\n";
  os << "</svg>\n";
  return os.str();
}

ReportFiles emit_report(const std::vector<SweepRecord>& records, const std::vector<LabeledArch>& extra_archs,
                        int window, int seq_len, const std::string& dir) {
  std::filesystem::create_directories(dir);
  ReportFiles files;
  files.summary_csv = dir + "/report_summary.csv";
  files.strip_svg = dir + "/allocation_strip.svg";
  files.chart_svg = dir + "/budget_kl.svg";
  if (records.empty() && extra_archs.empty()) {
    files.empty = true;
    write_file(dir + "/report_EMPTY.txt", "empty report: no sweep records or architectures were found\n");
    return files;
  }
  std::vector<LabeledArch> strips;
  for (const auto& r : records) {
    if (r.ok) strips.push_back({"lambda=" + num(r.lambda, "%g") + " seed=" + std::to_string(r.seed), r.arch});
  }
  strips.insert(strips.end(), extra_archs.begin(), extra_archs.end());
  write_file(files.summary_csv, lambda_summary_csv(records));
  write_file(files.strip_svg, allocation_strip_svg(strips, window, seq_len));
  write_file(files.chart_svg, budget_kl_svg(records));
  return files;
}

}  // namespace dash
