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

// Turns a TraceGraph into a structured symbolic program.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "duet/error.hpp"
#include "duet/trace_graph.hpp"

namespace duet {

struct SymInst;

struct SymBlock {
  std::vector<SymInst> insts;
};

struct ExecOp {
  NodeId node = -1;
  OpKind kind = OpKind::kAdd;
  Attrs attrs;
  std::vector<InputBinding> inputs;
};

// Pops one value for a statically fed input and binds it to that input.
struct InputFeed {
  FeedSlot slot;
  NodeId node = -1;
  int input = 0;
};

struct OutputFetch {
  NodeId node = -1;
};

struct SwitchCase {
  NodeId branch = -1;
  std::vector<SymBlock> cases;  // indexed like the branch node's children
};

struct While {
  LoopId loop = -1;
  NodeId loop_node = -1;
  std::vector<SymBlock> body;  // exactly one block
};

struct UnrolledLoop {
  LoopId loop = -1;
  NodeId loop_node = -1;
  std::vector<SymBlock> copies;
};

struct SymInst {
  std::variant<ExecOp, InputFeed, OutputFetch, SwitchCase, While, UnrolledLoop> v;
};

struct SymProgram {
  SymBlock body;
  std::size_t exec_ops = 0;
};

// branch node -> (successor -> case index)
using CaseMap = std::map<NodeId, std::map<NodeId, int>>;

struct GenConfig {
  std::size_t max_ops = 10000;
};

// Immediate post-dominator of every non-End node, computed per region.
inline std::map<NodeId, NodeId> post_dominators(const TraceGraph& tg) {
  std::map<NodeId, NodeId> ipdom;
  for (const Region& reg : tg.regions()) {
    std::map<NodeId, int> depth;
    depth[reg.end] = 0;
    auto order = tg.topo_order(reg.id);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId n = *it;
      if (n == reg.end) continue;
      const auto& ch = tg.node(n).children;
      if (ch.empty()) fail(ErrorCode::kInternal, "node without successors in TraceGraph");
      NodeId p = ch[0];
      for (std::size_t i = 1; i < ch.size(); ++i) {
        NodeId q = ch[i];
        while (p != q) {
          int dp = depth.at(p), dq = depth.at(q);
          if (dp >= dq) p = ipdom.at(p);
          if (dq >= dp) q = ipdom.at(q);
        }
      }
      ipdom[n] = p;
      depth[n] = depth.at(p) + 1;
    }
  }
  return ipdom;
}

namespace detail {

class Structurer {
 public:
  Structurer(const TraceGraph& tg, const GenConfig& cfg) : tg_(tg), cfg_(cfg), ipdom_(post_dominators(tg)) {}

  SymProgram run() {
    SymProgram sp;
    emit(tg_.region(tg_.root()).start, tg_.end(), sp.body);
    sp.exec_ops = exec_ops_;
    return sp;
  }

 private:
  const TraceGraph& tg_;
  const GenConfig& cfg_;
  std::map<NodeId, NodeId> ipdom_;
  std::size_t exec_ops_ = 0;

  void emit_node(const Node& n, SymBlock& out) {
    if (n.type == NodeType::kOp) {
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const auto& b = n.inputs[i];
        if (!b.dynamic() && !b.sources.empty() && b.sources[0].kind == InputSource::Kind::kFeed) {
          out.insts.push_back({InputFeed{b.sources[0].slot, n.id, static_cast<int>(i)}});
        }
      }
      if (++exec_ops_ > cfg_.max_ops) {
        fail(ErrorCode::kBudgetExceeded, "generated program exceeds " + std::to_string(cfg_.max_ops) + " operations");
      }
      out.insts.push_back({ExecOp{n.id, n.kind, n.attrs, n.inputs}});
      if (n.fetch) out.insts.push_back({OutputFetch{n.id}});
    } else if (n.type == NodeType::kLoop) {
      const Region& body = tg_.region(n.body);
      if (n.unrolled()) {
        UnrolledLoop u{n.loop_id, n.id, {}};
        for (std::int64_t k = 0; k < n.unroll_count(); ++k) {
          SymBlock b;
          emit(body.start, body.end, b);
          u.copies.push_back(std::move(b));
        }
        out.insts.push_back({std::move(u)});
      } else {
        While w{n.loop_id, n.id, {SymBlock{}}};
        emit(body.start, body.end, w.body[0]);
        out.insts.push_back({std::move(w)});
      }
    }
  }

  // Emits the single-entry region from `n` up to (excluding) `stop`.
  void emit(NodeId n, NodeId stop, SymBlock& out) {
    while (n != stop) {
      const Node& nd = tg_.node(n);
      emit_node(nd, out);
      const auto& succ = nd.children;
      if (succ.empty()) fail(ErrorCode::kInternal, "region ended before its stop node");
      if (succ.size() == 1) {
        n = succ[0];
        continue;
      }
      NodeId join = ipdom_.at(n);
      SwitchCase sc{n, {}};
      for (NodeId s : succ) {
        SymBlock b;
        emit(s, join, b);
        sc.cases.push_back(std::move(b));
      }
      out.insts.push_back({std::move(sc)});
      n = join;
    }
  }
};

}  // namespace detail

inline SymProgram structure(const TraceGraph& tg, const GenConfig& cfg = {}) {
  return detail::Structurer(tg, cfg).run();
}

inline CaseMap case_map(const TraceGraph& tg) {
  CaseMap m;
  for (const Node& n : tg.nodes()) {
    if (n.children.size() <= 1) continue;
    for (std::size_t i = 0; i < n.children.size(); ++i) m[n.id][n.children[i]] = static_cast<int>(i);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Path language: the set of ExecOp node sequences a program can run, with
// each While expanded to 0..trip_bound iterations.

using OpPath = std::vector<NodeId>;
using PathSet = std::set<OpPath>;

namespace detail {

inline void guard(const PathSet& s, std::size_t cap) {
  if (s.size() > cap) fail(ErrorCode::kExplosionGuard, "path enumeration exceeds " + std::to_string(cap) + " paths");
}

inline PathSet concat(const PathSet& a, const PathSet& b, std::size_t cap) {
  PathSet out;
  for (const auto& x : a) {
    for (const auto& y : b) {
      OpPath p = x;
      p.insert(p.end(), y.begin(), y.end());
      out.insert(std::move(p));
      guard(out, cap);
    }
  }
  return out;
}

inline PathSet repeat(const PathSet& body, std::int64_t lo, std::int64_t hi, std::size_t cap) {
  PathSet out;
  PathSet cur{OpPath{}};
  for (std::int64_t t = 0; t <= hi; ++t) {
    if (t >= lo) {
      out.insert(cur.begin(), cur.end());
      guard(out, cap);
    }
    if (t < hi) cur = concat(cur, body, cap);
  }
  return out;
}

inline PathSet block_paths(const SymBlock& b, std::int64_t trip_bound, std::size_t cap);

inline PathSet inst_paths(const SymInst& inst, std::int64_t trip_bound, std::size_t cap) {
  return std::visit(
      [&](const auto& i) -> PathSet {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, ExecOp>) {
          return {OpPath{i.node}};
        } else if constexpr (std::is_same_v<T, SwitchCase>) {
          PathSet out;
          for (const auto& c : i.cases) {
            auto p = block_paths(c, trip_bound, cap);
            out.insert(p.begin(), p.end());
            guard(out, cap);
          }
          return out;
        } else if constexpr (std::is_same_v<T, While>) {
          return repeat(block_paths(i.body[0], trip_bound, cap), 0, trip_bound, cap);
        } else if constexpr (std::is_same_v<T, UnrolledLoop>) {
          PathSet out{OpPath{}};
          for (const auto& c : i.copies) out = concat(out, block_paths(c, trip_bound, cap), cap);
          return out;
        } else {
          return {OpPath{}};
        }
      },
      inst.v);
}

inline PathSet block_paths(const SymBlock& b, std::int64_t trip_bound, std::size_t cap) {
  PathSet out{OpPath{}};
  for (const auto& inst : b.insts) out = concat(out, inst_paths(inst, trip_bound, cap), cap);
  return out;
}

}  // namespace detail

inline PathSet path_language(const SymProgram& sp, std::int64_t trip_bound, std::size_t cap = 100000) {
  return detail::block_paths(sp.body, trip_bound, cap);
}

// ---------------------------------------------------------------------------

namespace detail {

class SymDot {
 public:
  std::string out;

  std::string block(const SymBlock& b, std::string last, int depth) {
    for (const auto& inst : b.insts) last = emit(inst, last, depth);
    return last;
  }

 private:
  int counter_ = 0;

  std::string fresh() { return "s" + std::to_string(counter_++); }
  void line(int depth, const std::string& s) { out += std::string(static_cast<std::size_t>(2 * depth), ' ') + s + "\n"; }
  void node(int depth, const std::string& id, const std::string& shape, const std::string& label) {
    line(depth, id + " [shape=" + shape + ", label=\"" + label + "\"];");
  }
  void edge(int depth, const std::string& from, const std::string& to, const std::string& attrs = "") {
    line(depth, from + " -> " + to + (attrs.empty() ? "" : " [" + attrs + "]") + ";");
  }
  std::string open_cluster(int depth, const std::string& label) {
    std::string id = fresh();
    line(depth, "subgraph cluster_" + id + " {");
    line(depth + 1, "label=\"" + label + "\";");
    return id;
  }

  std::string emit(const SymInst& inst, const std::string& last, int depth) {
    if (auto op = std::get_if<ExecOp>(&inst.v)) {
      std::string id = fresh();
      std::string label = std::string(op_name(op->kind)) + " #" + std::to_string(op->node);
      if (!op->attrs.empty()) label += "\\n" + dot_escape(attrs_to_string(op->attrs));
      node(depth, id, "box", label);
      edge(depth, last, id);
      return id;
    }
    if (auto f = std::get_if<InputFeed>(&inst.v)) {
      std::string id = fresh();
      node(depth, id, "invhouse", "InputFeed " + feed_slot_to_string(f->slot));
      edge(depth, last, id);
      return id;
    }
    if (auto f = std::get_if<OutputFetch>(&inst.v)) {
      std::string id = fresh();
      node(depth, id, "house", "OutputFetch #" + std::to_string(f->node));
      edge(depth, last, id);
      return id;
    }
    if (auto sc = std::get_if<SwitchCase>(&inst.v)) {
      std::string head = open_cluster(depth, "SwitchCase @" + std::to_string(sc->branch));
      node(depth + 1, head, "diamond", "CaseSelect @" + std::to_string(sc->branch));
      std::string join = fresh();
      node(depth + 1, join, "point", "");
      for (std::size_t c = 0; c < sc->cases.size(); ++c) {
        std::string entry = open_cluster(depth + 1, "case " + std::to_string(c));
        node(depth + 2, entry, "point", "");
        edge(depth + 2, head, entry, "label=\"" + std::to_string(c) + "\"");
        std::string tail = block(sc->cases[c], entry, depth + 2);
        line(depth + 1, "}");
        edge(depth + 1, tail, join);
      }
      line(depth, "}");
      edge(depth, last, head);
      return join;
    }
    if (auto w = std::get_if<While>(&inst.v)) {
      std::string cond = open_cluster(depth, "While L" + std::to_string(w->loop));
      node(depth + 1, cond, "hexagon", "LoopCond L" + std::to_string(w->loop));
      std::string tail = block(w->body[0], cond, depth + 1);
      edge(depth + 1, tail, cond, "style=dashed");
      line(depth, "}");
      edge(depth, last, cond);
      return cond;
    }
    const auto& u = std::get<UnrolledLoop>(inst.v);
    std::string tail = last;
    for (std::size_t k = 0; k < u.copies.size(); ++k) {
      std::string entry = open_cluster(depth, "L" + std::to_string(u.loop) + " copy " + std::to_string(k));
      node(depth + 1, entry, "point", "");
      edge(depth + 1, tail, entry);
      tail = block(u.copies[k], entry, depth + 1);
      line(depth, "}");
    }
    return tail;
  }
};

}  // namespace detail

// SwitchCase, While and each unrolled copy become clusters.
inline std::string symprog_to_dot(const SymProgram& sp) {
  if (sp.body.insts.empty()) return "digraph symbolic {\n}\n";
  detail::SymDot d;
  d.out = "digraph symbolic {\n  entry [shape=circle, label=\"\"];\n";
  std::string last = d.block(sp.body, "entry", 1);
  d.out += "  exit [shape=doublecircle, label=\"\"];\n  " + last + " -> exit;\n}\n";
  return d.out;
}

}  // namespace duet
