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

// Command-line driver: run programs, dump graphs, benchmark a suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "duet/duet.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsage = 2;

struct Common {
  std::uint64_t seed = 0;
  std::string dataset;
  bool synthetic = false;
  std::string cost;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "seed for natives and synthetic data");
  auto* ds = cmd->add_option("--dataset", c.dataset, "JSON-lines dataset file");
  auto* syn = cmd->add_flag("--synthetic", c.synthetic, "use synthetic inputs (default)");
  ds->excludes(syn);
  cmd->add_option("--cost", c.cost, "kernel cost model (JSON)");
}

duet::Dataset make_dataset(const Common& c) {
  if (!c.dataset.empty()) return duet::Dataset::from_file(c.dataset);
  return duet::Dataset::synthetic(c.seed);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) duet::fail(duet::ErrorCode::kRuntimeError, "cannot write '" + path + "'");
  f << text;
}

// Reading and parsing problems are usage errors.
std::optional<duet::Program> load_program(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    std::cerr << "error: cannot open '" << path << "'\n";
    return std::nullopt;
  }
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return duet::parse(ss.str());
  } catch (const duet::Error& e) {
    std::cerr << path << ": " << e.describe() << "\n";
    return std::nullopt;
  }
}

int exit_for(const duet::Error& e) { return e.is_static() ? kUsage : kRuntimeFailure; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duet: imperative programs co-executed with a generated graph"};
  app.require_subcommand(1);

  Common run_common;
  std::string run_file, run_mode = "coexec", stats_path;
  std::optional<std::int64_t> run_steps;
  std::size_t max_ops = 10000, capacity = 64;
  auto* run_cmd = app.add_subcommand("run", "run a program");
  run_cmd->add_option("file", run_file, "program file")->required();
  run_cmd->add_option("--mode", run_mode, "imperative|coexec|lazy|skeleton-check")
      ->check(CLI::IsMember({"imperative", "coexec", "lazy", "skeleton-check"}));
  run_cmd->add_option("--stats", stats_path, "write run statistics as JSON");
  run_cmd->add_option("--steps", run_steps, "override the program's step count");
  run_cmd->add_option("--max-ops", max_ops, "operation budget of a generated program");
  run_cmd->add_option("--capacity", capacity, "channel capacity");
  add_common(run_cmd, run_common);

  Common dump_common;
  std::string dump_file, dump_what, dump_dot, dump_json;
  std::int64_t dump_steps = 2;
  auto* dump_cmd = app.add_subcommand("dump", "trace some steps and dump the graphs");
  dump_cmd->add_option("file", dump_file, "program file")->required();
  dump_cmd->add_option("--what", dump_what, "tracegraph|symgraph")->required()->check(
      CLI::IsMember({"tracegraph", "symgraph"}));
  dump_cmd->add_option("--steps", dump_steps, "number of traced steps")->check(CLI::NonNegativeNumber);
  dump_cmd->add_option("--dot", dump_dot, "write DOT here instead of standard output");
  dump_cmd->add_option("--json", dump_json, "write TraceGraph JSON here");
  add_common(dump_cmd, dump_common);

  Common bench_common;
  std::string bench_dir, bench_modes = "imperative,coexec,lazy", bench_json_path;
  std::int64_t warmup = 20, measure = 100;
  int repeat = 1;
  auto* bench_cmd = app.add_subcommand("bench", "benchmark every program of a directory");
  bench_cmd->add_option("dir", bench_dir, "suite directory")->required();
  bench_cmd->add_option("--modes", bench_modes, "comma-separated modes");
  bench_cmd->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--measure", measure)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeat", repeat)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--json", bench_json_path, "write results as JSON");
  add_common(bench_cmd, bench_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) {
      auto prog = load_program(run_file);
      if (!prog) return kUsage;
      duet::RunConfig cfg;
      cfg.mode = *duet::mode_from_name(run_mode);
      cfg.seed = run_common.seed;
      if (!run_common.cost.empty()) cfg.cost = duet::load_cost_config(run_common.cost);
      cfg.max_ops = max_ops;
      cfg.capacity = capacity;
      cfg.step_override = run_steps;
      auto out = duet::run(*prog, make_dataset(run_common), cfg);
      for (const auto& l : out.result.lines) std::cout << l << "\n";
      std::cout.flush();
      if (!stats_path.empty()) write_file(stats_path, duet::stats_to_json(out.stats).dump(2) + "\n");
      if (out.error) {
        std::cerr << "error: " << out.error->describe() << "\n";
        return exit_for(*out.error);
      }
      return kOk;
    }

    if (*dump_cmd) {
      auto prog = load_program(dump_file);
      if (!prog) return kUsage;
      duet::RunConfig cfg;
      cfg.seed = dump_common.seed;
      if (!dump_common.cost.empty()) cfg.cost = duet::load_cost_config(dump_common.cost);
      auto tg = duet::trace_steps(*prog, make_dataset(dump_common), cfg, dump_steps);
      std::string dot;
      if (dump_what == "tracegraph") {
        dot = duet::to_dot(tg);
        std::string json = duet::tracegraph_to_json(tg).dump(2) + "\n";
        if (!dump_json.empty()) write_file(dump_json, json);
        else if (!dump_dot.empty()) std::cout << json;
      } else {
        dot = duet::symprog_to_dot(duet::structure(tg));
      }
      if (dump_dot.empty()) std::cout << dot;
      else write_file(dump_dot, dot);
      return kOk;
    }

    if (*bench_cmd) {
      duet::BenchConfig cfg;
      cfg.modes.clear();
      std::stringstream ss(bench_modes);
      for (std::string m; std::getline(ss, m, ',');) {
        auto mode = duet::mode_from_name(m);
        if (!mode) {
          std::cerr << "error: unknown mode '" << m << "'\n";
          return kUsage;
        }
        cfg.modes.push_back(*mode);
      }
      if (!std::filesystem::is_directory(bench_dir)) {
        std::cerr << "error: '" << bench_dir << "' is not a directory\n";
        return kUsage;
      }
      cfg.warmup = warmup;
      cfg.measure = measure;
      cfg.repeat = repeat;
      cfg.base.seed = bench_common.seed;
      if (!bench_common.cost.empty()) cfg.base.cost = duet::load_cost_config(bench_common.cost);
      auto rows = duet::run_bench(bench_dir, cfg);
      std::cout << duet::bench_table(rows);
      if (!bench_json_path.empty()) write_file(bench_json_path, duet::bench_json(rows).dump(2) + "\n");
      return kOk;
    }
  } catch (const duet::Error& e) {
    std::cerr << "error: " << e.describe() << "\n";
    return exit_for(e);
  }
  return kOk;
}
