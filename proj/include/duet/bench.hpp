// Copyright 2026 The Duet Authors. All Rights Reserved.
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

// Benchmark harness: every program of a suite directory under several
// modes, throughput over the measured steps after warmup.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "duet/coexec.hpp"
#include "json.hpp"

namespace duet {

// {"MatMul": {"base_us": 200, "per_element_us": 0}, ...}
inline CostConfig cost_from_json(const nlohmann::json& j) {
  CostConfig c;
  for (const auto& [name, v] : j.items()) {
    auto kind = op_from_name(name);
    if (!kind) fail(ErrorCode::kBadAttrs, "cost model names unknown operation '" + name + "'");
    c.per_kind[*kind] = KernelCost{v.value("base_us", 0.0), v.value("per_element_us", 0.0)};
  }
  return c;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::kRuntimeError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline CostConfig load_cost_config(const std::string& path) {
  try {
    return cost_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadAttrs, "cost model '" + path + "': " + e.what());
  }
}

// A program's dataset: a sibling <name>.jsonl if present, else synthetic.
inline Dataset dataset_for(const std::filesystem::path& program, std::uint64_t seed) {
  auto data = program;
  data.replace_extension(".jsonl");
  if (std::filesystem::exists(data)) return Dataset::from_file(data.string());
  return Dataset::synthetic(seed);
}

struct BenchConfig {
  std::vector<Mode> modes{Mode::kImperative, Mode::kCoExec, Mode::kLazy};
  std::int64_t warmup = 20;
  std::int64_t measure = 100;
  int repeat = 1;
  RunConfig base;
};

struct BenchRow {
  std::string program;
  Mode mode = Mode::kImperative;
  std::vector<double> samples;  // steps/s per repeat
  double mean = 0;
  double speedup = 0;  // relative to imperative, when measured
  // per measured step, averaged over repeats
  double python_exec_ms = 0;
  double python_stall_ms = 0;
  double graph_exec_ms = 0;
  double graph_stall_ms = 0;
  std::int64_t phase_transitions = 0;
  std::int64_t steps_replayed = 0;
  bool output_matches = true;  // printed lines equal the imperative run
  std::optional<std::string> error;  // set when the program could not be benchmarked
};

inline BenchRow bench_one(const Program& prog, const std::filesystem::path& file, Mode mode, const BenchConfig& cfg,
                          const std::vector<std::string>* reference) {
  BenchRow row;
  row.program = file.stem().string();
  row.mode = mode;
  RunConfig rc = cfg.base;
  rc.mode = mode;
  rc.step_override = cfg.warmup + cfg.measure;
  for (int r = 0; r < cfg.repeat; ++r) {
    RunOutcome out = run(prog, dataset_for(file, rc.seed), rc);
    if (out.error) throw *out.error;
    double total_ms = 0;
    StepSample sum;
    for (std::size_t i = static_cast<std::size_t>(cfg.warmup); i < out.stats.steps.size(); ++i) {
      const auto& s = out.stats.steps[i];
      total_ms += s.wall_ms;
      sum.python_exec_ms += s.python_exec_ms;
      sum.python_stall_ms += s.python_stall_ms;
      sum.graph_exec_ms += s.graph_exec_ms;
      sum.graph_stall_ms += s.graph_stall_ms;
    }
    const double m = static_cast<double>(cfg.measure) * cfg.repeat;
    row.samples.push_back(total_ms > 0 ? static_cast<double>(cfg.measure) / (total_ms / 1000.0) : 0.0);
    row.python_exec_ms += sum.python_exec_ms / m;
    row.python_stall_ms += sum.python_stall_ms / m;
    row.graph_exec_ms += sum.graph_exec_ms / m;
    row.graph_stall_ms += sum.graph_stall_ms / m;
    row.phase_transitions = out.stats.phase_transitions;
    row.steps_replayed = out.stats.steps_replayed;
    if (reference && out.result.lines != *reference) row.output_matches = false;
  }
  row.mean = std::accumulate(row.samples.begin(), row.samples.end(), 0.0) / static_cast<double>(row.samples.size());
  return row;
}

inline std::vector<BenchRow> run_bench(const std::string& dir, const BenchConfig& cfg) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".tl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<BenchRow> rows;
  for (const auto& f : files) {
    std::size_t first = rows.size();
    try {
      Program prog = parse(read_file(f.string()));
      RunConfig rc = cfg.base;
      rc.mode = Mode::kImperative;
      rc.step_override = cfg.warmup + cfg.measure;
      auto ref = run(prog, dataset_for(f, rc.seed), rc);
      if (ref.error) throw *ref.error;
      double base = 0;
      for (Mode m : cfg.modes) {
        rows.push_back(bench_one(prog, f, m, cfg, &ref.result.lines));
        if (m == Mode::kImperative) base = rows.back().mean;
      }
      for (std::size_t i = first; i < rows.size(); ++i) rows[i].speedup = base > 0 ? rows[i].mean / base : 0.0;
    } catch (const Error& e) {
      // e.g. a finite dataset shorter than warmup + measure steps
      rows.resize(first);
      for (Mode m : cfg.modes) {
        BenchRow r;
        r.program = f.stem().string();
        r.mode = m;
        r.output_matches = false;
        r.error = e.describe();
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

inline std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %-14s %10s %8s %9s %9s %9s %9s %5s %4s %s\n", "program", "mode", "steps/s",
                "speedup", "py_exec", "py_stall", "g_exec", "g_stall", "trans", "repl", "out");
  out += buf;
  for (const auto& r : rows) {
    if (r.error) {
      out += r.program + std::string(r.program.size() < 18 ? 18 - r.program.size() : 0, ' ') + " " +
             std::string(mode_name(r.mode)) + ": skipped, " + *r.error + "\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%-18s %-14s %10.1f %7.2fx %9.3f %9.3f %9.3f %9.3f %5lld %4lld %s\n",
                  r.program.c_str(), std::string(mode_name(r.mode)).c_str(), r.mean, r.speedup, r.python_exec_ms,
                  r.python_stall_ms, r.graph_exec_ms, r.graph_stall_ms, static_cast<long long>(r.phase_transitions),
                  static_cast<long long>(r.steps_replayed), r.output_matches ? "ok" : "MISMATCH");
    out += buf;
  }
  out += "(times are ms per measured step)\n";
  return out;
}

inline nlohmann::json bench_json(const std::vector<BenchRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"program", r.program},
                   {"mode", mode_name(r.mode)},
                   {"samples", r.samples},
                   {"mean_steps_per_s", r.mean},
                   {"speedup", r.speedup},
                   {"python_exec_ms", r.python_exec_ms},
                   {"python_stall_ms", r.python_stall_ms},
                   {"graph_exec_ms", r.graph_exec_ms},
                   {"graph_stall_ms", r.graph_stall_ms},
                   {"phase_transitions", r.phase_transitions},
                   {"steps_replayed", r.steps_replayed},
                   {"output_matches", r.output_matches},
                   {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}});
  }
  return arr;
}

}  // namespace duet
