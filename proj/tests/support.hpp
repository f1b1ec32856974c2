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
// Shared helpers for the test binaries: corpus access, mode runners, result
// comparison, the random program generator and the brute-force path oracle.

#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "duet/duet.hpp"

namespace duet::testing {

inline std::filesystem::path corpus_dir() { return DUET_CORPUS_DIR; }
inline std::filesystem::path golden_dir() { return DUET_GOLDEN_DIR; }

inline std::vector<std::filesystem::path> corpus_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(corpus_dir())) {
    if (e.path().extension() == ".tl") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline Program load_program(const std::filesystem::path& p) { return parse(read_file(p.string())); }

inline RunOutcome run_mode(const Program& prog, const Dataset& data, Mode mode, RunConfig cfg = {}) {
  cfg.mode = mode;
  return run(prog, data, cfg);
}

// Empty string when equal, else a description of the first difference.
inline std::string compare_results(const RunResult& want, const RunResult& got) {
  if (want.lines.size() != got.lines.size()) {
    return "line count " + std::to_string(got.lines.size()) + " != " + std::to_string(want.lines.size());
  }
  for (std::size_t i = 0; i < want.lines.size(); ++i) {
    if (want.lines[i] != got.lines[i]) return "line " + std::to_string(i) + ": '" + got.lines[i] + "' != '" + want.lines[i] + "'";
  }
  if (want.vars.size() != got.vars.size()) return "variable count differs";
  for (const auto& [name, t] : want.vars) {
    auto it = got.vars.find(name);
    if (it == got.vars.end()) return "missing variable " + name;
    if (!t.bitwise_equal(it->second)) return "variable " + name + " differs";
  }
  return {};
}

// Compares outcome of `mode` with imperative mode, including errors.
inline std::string compare_with_imperative(const Program& prog, const Dataset& data, Mode mode, RunConfig cfg = {}) {
  auto ref = run_mode(prog, data, Mode::kImperative, cfg);
  auto got = run_mode(prog, data, mode, cfg);
  if (ref.error.has_value() != got.error.has_value()) {
    return std::string("error mismatch: ") + (ref.error ? ref.error->describe() : "none") + " vs " +
           (got.error ? got.error->describe() : "none");
  }
  if (ref.error && ref.error->describe() != got.error->describe()) {
    return "different errors: " + ref.error->describe() + " vs " + got.error->describe();
  }
  return compare_results(ref.result, got.result);
}

// ---------------------------------------------------------------------------
// Random programs over a bounded grammar. All tensors are 2x2 so every
// generated program is shape-correct; control flow depends on data, natives
// and host counters.

class ProgramGen {
 public:
  explicit ProgramGen(std::uint64_t seed) : rng_(seed) {}

  std::string generate() {
    std::ostringstream out;
    out << "var w = fill([2, 2], " << num(-0.5, 0.5) << ")\n";
    out << "var b = fill([2, 2], " << num(-0.5, 0.5) << ")\n";
    out << "let c = fill([2, 2], " << num(0.1, 0.9) << ")\n";
    out << "let scale = " << num(0.1, 2.0) << "\n";
    out << "steps " << pick(3, 8) << " {\n";
    out << "  let x = input(\"x\", [2, 2])\n";
    out << "  let h = 0\n";
    tensors_ = {"x", "c", "w", "b"};
    int n = pick(2, 6);
    for (int i = 0; i < n; ++i) stmt(out, 1, 0);
    out << "  print(x)\n";
    out << "}\n";
    return out.str();
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::string> tensors_;
  int loop_vars_ = 0;

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::string num(double lo, double hi) {
    double v = std::uniform_real_distribution<double>(lo, hi)(rng_);
    std::ostringstream s;
    s << static_cast<double>(static_cast<int>(v * 100)) / 100.0;
    return s.str();
  }
  std::string tensor() { return tensors_[static_cast<std::size_t>(pick(0, static_cast<int>(tensors_.size()) - 1))]; }

  std::string texpr(int depth) {
    int k = depth > 1 ? pick(0, 1) : pick(0, 9);
    switch (k) {
      case 0: return tensor();
      case 1: return "input(\"x\", [2, 2])";
      case 2: return "add(" + texpr(depth + 1) + ", " + texpr(depth + 1) + ")";
      case 3: return "mul(" + texpr(depth + 1) + ", scale)";
      case 4: return "sigmoid(" + texpr(depth + 1) + ")";
      case 5: return "relu(sub(" + texpr(depth + 1) + ", " + tensor() + "))";
      case 6: return "matmul(" + texpr(depth + 1) + ", " + tensor() + ")";
      case 7: return "transpose(" + texpr(depth + 1) + ", [1, 0])";
      case 8: return "reshape(reshape(" + texpr(depth + 1) + ", [4]), [2, 2])";
      default: return "neg(" + texpr(depth + 1) + ")";
    }
  }

  std::string cond() {
    switch (pick(0, 4)) {
      case 0: return "item(sum(" + tensor() + ")) > " + num(-1, 1);
      case 1: return "native coin(" + std::to_string(pick(0, 5)) + ")";
      case 2: return "native choice(3, " + std::to_string(pick(0, 5)) + ") == 1";
      case 3: return "h < " + std::to_string(pick(0, 3));
      default: return "item(mean(" + tensor() + ")) < 0 and native coin(" + std::to_string(pick(0, 5)) + ")";
    }
  }

  void indent(std::ostringstream& out, int d) {
    for (int i = 0; i < d; ++i) out << "  ";
  }

  void stmt(std::ostringstream& out, int d, int nest) {
    int k = nest >= 2 ? pick(0, 4) : pick(0, 8);
    indent(out, d);
    switch (k) {
      case 0:
      case 1: out << "x = " << texpr(0) << "\n"; break;
      case 2: out << (pick(0, 1) ? "w" : "b") << " = add(" << (pick(0, 1) ? "w" : "b") << ", mul(" << texpr(1) << ", 0.01))\n"; break;
      case 3: out << "print(" << (pick(0, 1) ? "sum(x)" : "item(mean(x)) + h") << ")\n"; break;
      case 4: out << "h = h + 1\n"; break;
      case 5:
      case 6: {
        out << "if " << cond() << " {\n";
        int n = pick(1, 3);
        for (int i = 0; i < n; ++i) stmt(out, d + 1, nest + 1);
        if (pick(0, 2) == 0) {
          indent(out, d);
          out << "} elif " << cond() << " {\n";
          stmt(out, d + 1, nest + 1);
        }
        if (pick(0, 1)) {
          indent(out, d);
          out << "} else {\n";
          stmt(out, d + 1, nest + 1);
        }
        indent(out, d);
        out << "}\n";
        break;
      }
      case 7: {
        std::string v = "i" + std::to_string(loop_vars_++);
        std::string count = pick(0, 1) ? std::to_string(pick(0, 3)) : "native choice(3, " + std::to_string(pick(0, 5)) + ")";
        out << "for " << v << " in range(" << count << ") {\n";
        int n = pick(1, 2);
        for (int i = 0; i < n; ++i) stmt(out, d + 1, nest + 1);
        indent(out, d);
        out << "}\n";
        break;
      }
      default: {
        std::string v = "n" + std::to_string(loop_vars_++);
        out << "let " << v << " = 0\n";
        indent(out, d);
        out << "while " << v << " < " << pick(0, 2) << " or (" << v << " < 4 and item(sum(x)) > 0) {\n";
        stmt(out, d + 1, nest + 1);
        indent(out, d + 1);
        out << v << " = " << v << " + 1\n";
        indent(out, d);
        out << "}\n";
        break;
      }
    }
  }
};

inline std::string fuzz_program(std::uint64_t seed) { return ProgramGen(seed).generate(); }

// ---------------------------------------------------------------------------
// Random single-entry/single-exit DAGs built directly as TraceGraphs.

inline OpEvent synthetic_event(int id) {
  OpEvent ev;
  ev.kind = OpKind::kRelu;
  ev.loc = SourceLoc{id, 0, {}};
  return ev;
}

// Op nodes are created in topological order; every node gets 1..max_out
// successors among later nodes or End, and nodes without a parent get one.
inline TraceGraph random_dag(std::mt19937_64& rng, int max_ops, int max_out) {
  TraceGraph tg;
  auto r = tg.root();
  int n = std::uniform_int_distribution<int>(1, max_ops)(rng);
  std::vector<NodeId> ids;
  for (int i = 0; i < n; ++i) ids.push_back(tg.add_op_node(r, synthetic_event(i)));
  auto outdeg = [&](NodeId x) { return static_cast<int>(tg.node(x).children.size()); };
  // Start's successors
  int s = std::uniform_int_distribution<int>(1, std::min(max_out, n))(rng);
  for (int k = 0; k < s; ++k) tg.add_edge(tg.start(), ids[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
  for (int i = 0; i < n; ++i) {
    if (tg.node(ids[i]).parents.empty()) {
      std::vector<NodeId> cands{tg.start()};
      for (int j = 0; j < i; ++j) cands.push_back(ids[j]);
      std::shuffle(cands.begin(), cands.end(), rng);
      NodeId from = tg.start();
      for (NodeId c : cands) {
        if (outdeg(c) < max_out) {
          from = c;
          break;
        }
      }
      tg.add_edge(from, ids[i]);
    }
    int want = std::uniform_int_distribution<int>(1, max_out)(rng);
    for (int k = 0; k < want && outdeg(ids[i]) < max_out; ++k) {
      int j = std::uniform_int_distribution<int>(i + 1, n)(rng);
      tg.add_edge(ids[i], j == n ? tg.end() : ids[j]);
    }
  }
  return tg;
}

namespace detail {

inline PathSet join(const PathSet& a, const PathSet& b) {
  PathSet out;
  for (const auto& x : a) {
    for (const auto& y : b) {
      OpPath p = x;
      p.insert(p.end(), y.begin(), y.end());
      out.insert(std::move(p));
    }
  }
  return out;
}

inline PathSet region_paths(const TraceGraph& tg, RegionId r, std::int64_t trip_bound);

// All op sequences from `n` (inclusive) to the region's End.
inline PathSet paths_from(const TraceGraph& tg, RegionId r, NodeId n, std::int64_t trip_bound,
                          std::map<NodeId, PathSet>& memo) {
  if (auto it = memo.find(n); it != memo.end()) return it->second;
  const Node& nd = tg.node(n);
  PathSet here{OpPath{}};
  if (nd.type == NodeType::kOp) {
    here = {OpPath{n}};
  } else if (nd.type == NodeType::kLoop) {
    PathSet body = region_paths(tg, nd.body, trip_bound);
    std::set<std::int64_t> counts;
    if (nd.unrolled()) {
      counts = nd.trip_counts;
    } else {
      for (std::int64_t t = 0; t <= trip_bound; ++t) counts.insert(t);
    }
    here.clear();
    PathSet cur{OpPath{}};
    for (std::int64_t t = 0; t <= *counts.rbegin(); ++t) {
      if (counts.count(t)) here.insert(cur.begin(), cur.end());
      cur = join(cur, body);
    }
  }
  PathSet out;
  if (n == tg.region(r).end) {
    out = {OpPath{}};
  } else {
    for (NodeId c : nd.children) {
      auto tail = join(here, paths_from(tg, r, c, trip_bound, memo));
      out.insert(tail.begin(), tail.end());
    }
  }
  memo[n] = out;
  return out;
}

inline PathSet region_paths(const TraceGraph& tg, RegionId r, std::int64_t trip_bound) {
  std::map<NodeId, PathSet> memo;
  return paths_from(tg, r, tg.region(r).start, trip_bound, memo);
}

}  // namespace detail

// Brute-force path enumeration over the TraceGraph itself: unrolled loops
// repeat their body exactly k times, other loops 0..trip_bound times.
inline PathSet graph_paths(const TraceGraph& tg, std::int64_t trip_bound) {
  return detail::region_paths(tg, tg.root(), trip_bound);
}

inline std::int64_t max_trip_count(const TraceGraph& tg) {
  std::int64_t m = 0;
  for (const Node& n : tg.nodes()) {
    if (n.type == NodeType::kLoop && !n.trip_counts.empty()) m = std::max(m, *n.trip_counts.rbegin());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Random traces over a small key pool, with nested loops.

class TraceGen {
 public:
  explicit TraceGen(std::uint64_t seed) : rng_(seed) {}

  Trace make() {
    Trace t;
    handles_.clear();
    next_handle_ = 0;
    body(t, 0, {});
    t.events.push_back(StepEnd{});
    return t;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<HandleId> handles_;
  HandleId next_handle_ = 0;

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  void op(Trace& t, const std::vector<LoopId>& path) {
    OpEvent ev;
    ev.kind = pick(0, 1) ? OpKind::kRelu : OpKind::kAdd;
    ev.loc = SourceLoc{pick(0, 4), 0, path};
    for (std::size_t i = 0; i < op_arity(ev.kind); ++i) {
      if (!handles_.empty() && pick(0, 2)) {
        ev.inputs.push_back(HandleRef{handles_[static_cast<std::size_t>(pick(0, static_cast<int>(handles_.size()) - 1))]});
      } else {
        ev.inputs.push_back(ExternalRef{FeedSlot{ev.loc.stmt_id, 0, static_cast<int>(i)}});
      }
    }
    ev.outputs.push_back(next_handle_);
    handles_.push_back(next_handle_++);
    ev.fetch_after = pick(0, 5) == 0;
    t.events.push_back(ev);
  }

  void body(Trace& t, int depth, std::vector<LoopId> path) {
    int n = pick(depth == 0 ? 1 : 0, 4);
    for (int i = 0; i < n; ++i) {
      if (depth < 2 && pick(0, 3) == 0) {
        LoopId loop = depth * 2 + pick(0, 1);
        auto inner = path;
        inner.push_back(loop);
        t.events.push_back(LoopEnter{loop});
        int trips = pick(0, 3);
        for (int k = 0; k < trips; ++k) {
          t.events.push_back(LoopIterStart{loop});
          body(t, depth + 1, inner);
        }
        t.events.push_back(LoopExit{loop});
      } else {
        op(t, path);
      }
    }
  }
};

}  // namespace duet::testing
