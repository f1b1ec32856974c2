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

// TraceGraph: the DAG that merges per-step traces. Nodes live in one arena
// with globally unique ids; every loop node owns a nested region (its body)
// that is itself a Start/End-delimited DAG.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "duet/error.hpp"
#include "duet/trace.hpp"
#include "json.hpp"

namespace duet {

using NodeId = int;
using RegionId = int;

enum class NodeType { kStart, kEnd, kOp, kLoop };

inline std::string_view node_type_name(NodeType t) {
  switch (t) {
    case NodeType::kStart: return "start";
    case NodeType::kEnd: return "end";
    case NodeType::kOp: return "op";
    case NodeType::kLoop: return "loop";
  }
  return "?";
}

// Where an operation input came from in some observed trace.
struct InputSource {
  enum class Kind { kProducer, kFeed };
  Kind kind = Kind::kProducer;
  NodeId producer = -1;
  FeedSlot slot;

  static InputSource from_producer(NodeId n) { return {Kind::kProducer, n, {}}; }
  static InputSource from_feed(FeedSlot s) { return {Kind::kFeed, -1, s}; }

  auto operator<=>(const InputSource&) const = default;
};

// All sources observed for one input position. A binding is static when a
// single producer was always consumed at its most recent execution (or a
// single feed); otherwise the interpreter names the source at run time.
struct InputBinding {
  std::vector<InputSource> sources;  // first-seen order
  bool explicit_occurrence = false;

  bool dynamic() const { return sources.size() > 1 || explicit_occurrence; }

  int index_of(const InputSource& s) const {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i] == s) return static_cast<int>(i);
    }
    return -1;
  }

  bool operator==(const InputBinding&) const = default;
};

struct Node {
  NodeId id = -1;
  NodeType type = NodeType::kOp;
  RegionId region = 0;

  // kOp
  OpKind kind = OpKind::kAdd;
  Attrs attrs;
  SourceLoc loc;
  std::vector<InputBinding> inputs;
  bool fetch = false;

  // kLoop
  LoopId loop_id = -1;
  RegionId body = -1;
  std::set<std::int64_t> trip_counts;

  std::vector<NodeId> children;  // insertion order defines case indices
  std::vector<NodeId> parents;

  bool unrolled() const { return type == NodeType::kLoop && trip_counts.size() == 1; }
  std::int64_t unroll_count() const { return *trip_counts.begin(); }
};

struct Region {
  RegionId id = 0;
  NodeId start = -1;
  NodeId end = -1;
  NodeId owner = -1;           // loop node whose body this is; -1 for the root
  std::vector<NodeId> nodes;   // insertion order, including start/end
};

inline bool key_matches(const Node& n, const OpEvent& ev) {
  return n.type == NodeType::kOp && n.kind == ev.kind && n.loc == ev.loc && n.attrs == ev.attrs;
}
inline bool key_matches(const Node& n, LoopId loop) { return n.type == NodeType::kLoop && n.loop_id == loop; }

inline std::string node_key_string(const Node& n) {
  switch (n.type) {
    case NodeType::kStart: return "Start";
    case NodeType::kEnd: return "End";
    case NodeType::kLoop: return "Loop" + std::to_string(n.loop_id);
    case NodeType::kOp: {
      std::string s = std::string(op_name(n.kind)) + "@" + loc_to_string(n.loc);
      if (!n.attrs.empty()) s += "{" + attrs_to_string(n.attrs) + "}";
      return s;
    }
  }
  return "?";
}

class TraceGraph {
 public:
  TraceGraph() { new_region(-1); }

  RegionId root() const { return 0; }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  Node& node(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Region& region(RegionId id) const { return regions_.at(static_cast<std::size_t>(id)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Region>& regions() const { return regions_; }
  std::size_t node_count() const { return nodes_.size(); }

  NodeId start() const { return regions_[0].start; }
  NodeId end() const { return regions_[0].end; }

  NodeId add_op_node(RegionId r, const OpEvent& ev) {
    NodeId id = add_node(r, NodeType::kOp);
    Node& n = nodes_.back();
    n.kind = ev.kind;
    n.attrs = ev.attrs;
    n.loc = ev.loc;
    n.inputs.resize(ev.inputs.size());
    return id;
  }

  NodeId add_loop_node(RegionId r, LoopId loop) {
    NodeId id = add_node(r, NodeType::kLoop);
    nodes_[static_cast<std::size_t>(id)].loop_id = loop;
    RegionId body = new_region(id);
    nodes_[static_cast<std::size_t>(id)].body = body;
    return id;
  }

  // Returns false when the edge already exists.
  bool add_edge(NodeId from, NodeId to) {
    Node& f = node(from);
    if (std::find(f.children.begin(), f.children.end(), to) != f.children.end()) return false;
    f.children.push_back(to);
    node(to).parents.push_back(from);
    return true;
  }

  std::optional<NodeId> find_child(NodeId from, const OpEvent& ev) const {
    for (NodeId c : node(from).children) {
      if (key_matches(node(c), ev)) return c;
    }
    return std::nullopt;
  }
  std::optional<NodeId> find_child(NodeId from, LoopId loop) const {
    for (NodeId c : node(from).children) {
      if (key_matches(node(c), loop)) return c;
    }
    return std::nullopt;
  }
  int child_index(NodeId from, NodeId child) const {
    const auto& ch = node(from).children;
    auto it = std::find(ch.begin(), ch.end(), child);
    return it == ch.end() ? -1 : static_cast<int>(it - ch.begin());
  }

  // True iff `to` is reachable from `from` (reflexive).
  bool reaches(NodeId from, NodeId to) const {
    std::vector<NodeId> stack{from};
    std::set<NodeId> seen{from};
    while (!stack.empty()) {
      NodeId n = stack.back();
      stack.pop_back();
      if (n == to) return true;
      for (NodeId c : node(n).children) {
        if (seen.insert(c).second) stack.push_back(c);
      }
    }
    return false;
  }

  // Topological order of one region (Kahn, ties broken by insertion order).
  std::vector<NodeId> topo_order(RegionId r) const {
    const Region& reg = region(r);
    std::map<NodeId, std::size_t> indeg;
    for (NodeId n : reg.nodes) indeg[n] = node(n).parents.size();
    std::vector<NodeId> order;
    std::vector<NodeId> ready;
    for (NodeId n : reg.nodes) {
      if (indeg[n] == 0) ready.push_back(n);
    }
    while (!ready.empty()) {
      std::sort(ready.begin(), ready.end(), std::greater<>());
      NodeId n = ready.back();
      ready.pop_back();
      order.push_back(n);
      for (NodeId c : node(n).children) {
        if (--indeg[c] == 0) ready.push_back(c);
      }
    }
    return order;
  }

  // Structural invariants; returns a description of the first violation.
  std::optional<std::string> check_invariants() const {
    for (const Region& reg : regions_) {
      const Node& s = node(reg.start);
      const Node& e = node(reg.end);
      if (!s.parents.empty()) return "start node has parents in region " + std::to_string(reg.id);
      if (!e.children.empty()) return "end node has children in region " + std::to_string(reg.id);
      if (topo_order(reg.id).size() != reg.nodes.size()) return "cycle in region " + std::to_string(reg.id);
      for (NodeId n : reg.nodes) {
        const Node& nd = node(n);
        if (nd.region != reg.id) return "node " + std::to_string(n) + " has wrong region";
        for (NodeId c : nd.children) {
          if (node(c).region != reg.id) return "edge crosses regions at node " + std::to_string(n);
        }
        for (std::size_t i = 0; i < nd.children.size(); ++i) {
          for (std::size_t j = i + 1; j < nd.children.size(); ++j) {
            if (same_key(node(nd.children[i]), node(nd.children[j]))) {
              return "children of node " + std::to_string(n) + " are not key-distinct";
            }
          }
        }
        if (n != reg.start && nd.parents.empty()) return "node " + std::to_string(n) + " unreachable from start";
        if (n != reg.end && nd.children.empty()) return "node " + std::to_string(n) + " cannot reach end";
      }
    }
    return std::nullopt;
  }

  static bool same_key(const Node& a, const Node& b) {
    if (a.type != b.type) return false;
    if (a.type == NodeType::kLoop) return a.loop_id == b.loop_id;
    if (a.type == NodeType::kOp) return a.kind == b.kind && a.loc == b.loc && a.attrs == b.attrs;
    return true;
  }

  bool empty() const { return nodes_.size() == 2 && node(start()).children.empty(); }

 private:
  std::vector<Node> nodes_;
  std::vector<Region> regions_;

  NodeId add_node(RegionId r, NodeType type) {
    Node n;
    n.id = static_cast<NodeId>(nodes_.size());
    n.type = type;
    n.region = r;
    nodes_.push_back(std::move(n));
    regions_[static_cast<std::size_t>(r)].nodes.push_back(nodes_.back().id);
    return nodes_.back().id;
  }

  RegionId new_region(NodeId owner) {
    Region reg;
    reg.id = static_cast<RegionId>(regions_.size());
    reg.owner = owner;
    regions_.push_back(reg);
    regions_.back().start = add_node(reg.id, NodeType::kStart);
    regions_.back().end = add_node(reg.id, NodeType::kEnd);
    return reg.id;
  }
};

// ---------------------------------------------------------------------------
// Trace tree: a trace with loop occurrences nested and op-free loop
// occurrences removed.

struct TraceItem {
  const OpEvent* op = nullptr;
  LoopId loop = -1;
  std::vector<std::vector<TraceItem>> iterations;
};

namespace detail {

inline std::size_t count_ops(const std::vector<TraceItem>& items) {
  std::size_t n = 0;
  for (const auto& it : items) {
    if (it.op) {
      ++n;
    } else {
      for (const auto& iter : it.iterations) n += count_ops(iter);
    }
  }
  return n;
}

}  // namespace detail

inline std::vector<TraceItem> build_trace_tree(const Trace& trace) {
  validate_trace(trace);
  struct Open {
    TraceItem item;
    std::vector<TraceItem>* parent;
  };
  std::vector<TraceItem> root;
  std::vector<Open> stack;
  auto current = [&]() -> std::vector<TraceItem>& {
    if (stack.empty()) return root;
    return stack.back().item.iterations.back();
  };
  for (const auto& ev : trace.events) {
    if (auto op = std::get_if<OpEvent>(&ev)) {
      TraceItem it;
      it.op = op;
      current().push_back(std::move(it));
    } else if (auto e = std::get_if<LoopEnter>(&ev)) {
      std::vector<TraceItem>* parent = &current();
      TraceItem it;
      it.loop = e->loop;
      stack.push_back({std::move(it), parent});
    } else if (std::holds_alternative<LoopIterStart>(ev)) {
      stack.back().item.iterations.emplace_back();
    } else if (std::holds_alternative<LoopExit>(ev)) {
      Open o = std::move(stack.back());
      stack.pop_back();
      std::size_t ops = 0;
      for (const auto& iter : o.item.iterations) ops += detail::count_ops(iter);
      if (ops > 0) o.parent->push_back(std::move(o.item));
    }
  }
  return root;
}

// ---------------------------------------------------------------------------
// Merging.

struct MergeReport {
  bool covered = false;
  std::size_t nodes_added = 0;
  std::size_t edges_added = 0;
  std::size_t annotations_added = 0;
};

namespace detail {

class Merger {
 public:
  explicit Merger(TraceGraph& tg) : tg_(tg) {}

  MergeReport run(const Trace& trace) {
    auto tree = build_trace_tree(trace);
    merge_sequence(tg_.root(), tree);
    report_.covered = report_.nodes_added == 0 && report_.edges_added == 0 && report_.annotations_added == 0;
    return report_;
  }

 private:
  TraceGraph& tg_;
  MergeReport report_;
  std::map<NodeId, std::int64_t> occurrences_;
  std::map<HandleId, std::pair<NodeId, std::int64_t>> handles_;

  // Existing node in the region with the same key that the fork node does
  // not descend from; first in insertion order.
  template <typename Key>
  std::optional<NodeId> merge_back_target(RegionId r, NodeId fork, const Key& key) {
    for (NodeId n : tg_.region(r).nodes) {
      const Node& nd = tg_.node(n);
      if (n == fork || !key_matches(nd, key)) continue;
      if (tg_.reaches(n, fork)) continue;
      return n;
    }
    return std::nullopt;
  }

  template <typename Key>
  NodeId step_to(RegionId r, NodeId pos, const Key& key) {
    if (auto c = tg_.find_child(pos, key)) return *c;
    NodeId target;
    if (auto m = merge_back_target(r, pos, key)) {
      target = *m;
    } else {
      if constexpr (std::is_same_v<Key, OpEvent>) {
        target = tg_.add_op_node(r, key);
      } else {
        target = tg_.add_loop_node(r, key);
      }
      ++report_.nodes_added;
    }
    tg_.add_edge(pos, target);
    ++report_.edges_added;
    return target;
  }

  void record_op(NodeId target, const OpEvent& ev) {
    Node& n = tg_.node(target);
    for (std::size_t i = 0; i < ev.inputs.size(); ++i) {
      InputBinding& b = n.inputs[i];
      InputSource src;
      bool latest = true;
      if (auto h = std::get_if<HandleRef>(&ev.inputs[i])) {
        auto it = handles_.find(h->id);
        if (it == handles_.end()) fail(ErrorCode::kMalformedTrace, "handle without producer");
        src = InputSource::from_producer(it->second.first);
        latest = it->second.second + 1 == occurrences_[it->second.first];
      } else {
        src = InputSource::from_feed(std::get<ExternalRef>(ev.inputs[i]).slot);
      }
      if (b.index_of(src) < 0) {
        b.sources.push_back(src);
        ++report_.annotations_added;
      }
      if (!latest && !b.explicit_occurrence) {
        b.explicit_occurrence = true;
        ++report_.annotations_added;
      }
    }
    if (ev.fetch_after && !n.fetch) {
      n.fetch = true;
      ++report_.annotations_added;
    }
    std::int64_t occ = occurrences_[target]++;
    for (HandleId h : ev.outputs) handles_[h] = {target, occ};
  }

  void merge_sequence(RegionId r, const std::vector<TraceItem>& items) {
    NodeId pos = tg_.region(r).start;
    for (const auto& item : items) {
      if (item.op) {
        NodeId target = step_to(r, pos, *item.op);
        record_op(target, *item.op);
        pos = target;
      } else {
        NodeId target = step_to(r, pos, item.loop);
        RegionId body = tg_.node(target).body;
        for (const auto& iter : item.iterations) merge_sequence(body, iter);
        Node& loop = tg_.node(target);
        auto trips = static_cast<std::int64_t>(item.iterations.size());
        if (!loop.trip_counts.count(trips)) {
          // Only a change between "unrollable" and "needs a While" alters the
          // generated program; further trip counts of a While are recorded
          // but do not count as new coverage.
          if (loop.trip_counts.size() <= 1) ++report_.annotations_added;
          loop.trip_counts.insert(trips);
        }
        pos = target;
      }
    }
    if (tg_.add_edge(pos, tg_.region(r).end)) ++report_.edges_added;
  }
};

}  // namespace detail

inline MergeReport merge_trace(TraceGraph& tg, const Trace& trace) {
  auto report = detail::Merger(tg).run(trace);
#ifndef NDEBUG
  if (auto bad = tg.check_invariants()) fail(ErrorCode::kInternal, "TraceGraph invariant violated: " + *bad);
#endif
  return report;
}

inline bool covers(const TraceGraph& tg, const Trace& trace) {
  TraceGraph copy = tg;
  return detail::Merger(copy).run(trace).covered;
}

// ---------------------------------------------------------------------------
// Decisions and the online cursor.

struct CaseDecision {
  NodeId branch = -1;
  int case_index = 0;
  bool operator==(const CaseDecision&) const = default;
};
struct LoopDecision {
  LoopId loop = -1;
  NodeId loop_node = -1;
  bool cont = false;
  bool operator==(const LoopDecision&) const = default;
};
// Names the source of a dynamically bound input: index into the node's
// observed sources and, for producers, which execution of the producer.
struct BindDecision {
  NodeId node = -1;
  int input = 0;
  int source = 0;
  std::int64_t occurrence = -1;
  bool operator==(const BindDecision&) const = default;
};
using Decision = std::variant<CaseDecision, LoopDecision, BindDecision>;

inline std::string decision_to_string(const Decision& d) {
  if (auto c = std::get_if<CaseDecision>(&d)) {
    return "case(" + std::to_string(c->branch) + "->" + std::to_string(c->case_index) + ")";
  }
  if (auto l = std::get_if<LoopDecision>(&d)) {
    return std::string("loop(L") + std::to_string(l->loop) + (l->cont ? ",continue)" : ",exit)");
  }
  const auto& b = std::get<BindDecision>(d);
  return "bind(" + std::to_string(b.node) + "." + std::to_string(b.input) + "<-" + std::to_string(b.source) + "#" +
         std::to_string(b.occurrence) + ")";
}

struct Advance {
  NodeId node = -1;
  std::vector<Decision> decisions;
};

// Walks a TraceGraph alongside a live step. Loop markers are buffered until
// the first op inside the loop so op-free loop occurrences vanish exactly as
// they do in merge_trace. Once diverged, every further call reports
// divergence.
class Cursor {
 public:
  explicit Cursor(const TraceGraph& tg) : tg_(&tg) { frames_.push_back({tg.root(), tg.start(), -1, 0}); }

  std::optional<Advance> advance(const TraceEvent& ev) {
    if (diverged_ || finished_) return diverge();
    Advance adv;
    out_ = &adv.decisions;
    bool ok = std::visit([&](const auto& e) { return handle(e, adv); }, ev);
    out_ = nullptr;
    if (!ok) return diverge();
    return adv;
  }

  // Node and occurrence whose output a materialization of `h` must fetch;
  // nullopt (divergence) if the graph does not fetch that node.
  std::optional<std::pair<NodeId, std::int64_t>> fetch_target(HandleId h) {
    auto it = handles_.find(h);
    if (it == handles_.end() || !tg_->node(it->second.first).fetch) {
      diverged_ = true;
      return std::nullopt;
    }
    return it->second;
  }

  std::optional<std::pair<NodeId, std::int64_t>> producer_of(HandleId h) const {
    auto it = handles_.find(h);
    if (it == handles_.end()) return std::nullopt;
    return it->second;
  }

  bool diverged() const { return diverged_; }
  bool finished() const { return finished_; }
  const TraceGraph& graph() const { return *tg_; }

 private:
  struct Frame {
    RegionId region;
    NodeId pos;
    NodeId loop_node;
    std::int64_t iterations;
  };

  const TraceGraph* tg_;
  std::vector<Frame> frames_;
  std::vector<TraceEvent> pending_;
  std::map<NodeId, std::int64_t> occurrences_;
  std::map<HandleId, std::pair<NodeId, std::int64_t>> handles_;
  std::vector<Decision>* out_ = nullptr;
  bool diverged_ = false;
  bool finished_ = false;

  std::optional<Advance> diverge() {
    diverged_ = true;
    return std::nullopt;
  }

  // Moves the top frame to `child`, emitting a case decision at branches.
  void move_to(NodeId child) {
    Frame& f = frames_.back();
    const Node& from = tg_->node(f.pos);
    if (from.children.size() > 1) out_->push_back(CaseDecision{f.pos, tg_->child_index(f.pos, child)});
    f.pos = child;
  }

  bool finish_iteration() {
    Frame& f = frames_.back();
    NodeId end = tg_->region(f.region).end;
    if (tg_->child_index(f.pos, end) < 0) return false;
    move_to(end);
    return true;
  }

  bool enter_loop(LoopId loop) {
    auto child = tg_->find_child(frames_.back().pos, loop);
    if (!child) return false;
    move_to(*child);
    const Node& ln = tg_->node(*child);
    frames_.push_back({ln.body, tg_->region(ln.body).start, *child, 0});
    return true;
  }

  bool iter_start(LoopId loop) {
    Frame& f = frames_.back();
    if (f.loop_node < 0 || tg_->node(f.loop_node).loop_id != loop) return false;
    if (f.iterations > 0 && !finish_iteration()) return false;
    const Node& ln = tg_->node(f.loop_node);
    ++f.iterations;
    if (ln.unrolled()) {
      if (f.iterations > ln.unroll_count()) return false;
    } else {
      out_->push_back(LoopDecision{loop, f.loop_node, true});
    }
    f.pos = tg_->region(f.region).start;
    return true;
  }

  bool loop_exit(LoopId loop) {
    Frame& f = frames_.back();
    if (f.loop_node < 0 || tg_->node(f.loop_node).loop_id != loop) return false;
    if (f.iterations > 0 && !finish_iteration()) return false;
    const Node& ln = tg_->node(f.loop_node);
    if (ln.unrolled()) {
      if (f.iterations != ln.unroll_count()) return false;
    } else {
      out_->push_back(LoopDecision{loop, f.loop_node, false});
    }
    frames_.pop_back();
    return true;
  }

  bool flush_pending() {
    for (const auto& ev : pending_) {
      bool ok = true;
      if (auto e = std::get_if<LoopEnter>(&ev)) ok = enter_loop(e->loop);
      else if (auto s = std::get_if<LoopIterStart>(&ev)) ok = iter_start(s->loop);
      if (!ok) return false;
    }
    pending_.clear();
    return true;
  }

  bool handle(const OpEvent& ev, Advance& adv) {
    if (!flush_pending()) return false;
    auto child = tg_->find_child(frames_.back().pos, ev);
    if (!child) return false;
    move_to(*child);
    const Node& n = tg_->node(*child);
    if (ev.fetch_after && !n.fetch) return false;
    for (std::size_t i = 0; i < ev.inputs.size(); ++i) {
      const InputBinding& b = n.inputs[i];
      InputSource src;
      std::int64_t occ = -1;
      bool latest = true;
      if (auto h = std::get_if<HandleRef>(&ev.inputs[i])) {
        auto it = handles_.find(h->id);
        if (it == handles_.end()) return false;
        src = InputSource::from_producer(it->second.first);
        occ = it->second.second;
        latest = occ + 1 == occurrences_[it->second.first];
      } else {
        src = InputSource::from_feed(std::get<ExternalRef>(ev.inputs[i]).slot);
      }
      int idx = b.index_of(src);
      if (idx < 0 || (!latest && !b.explicit_occurrence)) return false;
      if (b.dynamic()) adv.decisions.push_back(BindDecision{*child, static_cast<int>(i), idx, occ});
    }
    std::int64_t occ = occurrences_[*child]++;
    for (HandleId h : ev.outputs) handles_[h] = {*child, occ};
    adv.node = *child;
    return true;
  }

  bool handle(const LoopEnter& ev, Advance& adv) {
    pending_.push_back(ev);
    adv.node = frames_.back().pos;
    return true;
  }

  bool handle(const LoopIterStart& ev, Advance& adv) {
    if (!pending_.empty()) {
      pending_.push_back(ev);
      adv.node = frames_.back().pos;
      return true;
    }
    if (!iter_start(ev.loop)) return false;
    adv.node = frames_.back().pos;
    return true;
  }

  bool handle(const LoopExit& ev, Advance& adv) {
    if (!pending_.empty()) {
      for (std::size_t i = pending_.size(); i-- > 0;) {
        if (auto e = std::get_if<LoopEnter>(&pending_[i]); e && e->loop == ev.loop) {
          pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(i), pending_.end());
          adv.node = frames_.back().pos;
          return true;
        }
      }
      return false;
    }
    if (!loop_exit(ev.loop)) return false;
    adv.node = frames_.back().pos;
    return true;
  }

  bool handle(const StepEnd&, Advance& adv) {
    if (!pending_.empty() || frames_.size() != 1) return false;
    if (!finish_iteration()) return false;
    finished_ = true;
    adv.node = tg_->end();
    return true;
  }
};

// ---------------------------------------------------------------------------
// DOT and JSON.

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

namespace detail {

inline std::string source_label(const InputSource& s) {
  if (s.kind == InputSource::Kind::kFeed) return "feed " + feed_slot_to_string(s.slot);
  return "n" + std::to_string(s.producer);
}

inline std::string dot_node_label(const Node& n) {
  if (n.type != NodeType::kOp) {
    std::string s = node_key_string(n);
    if (n.type == NodeType::kLoop) {
      s += "\\ntrips {";
      bool first = true;
      for (auto t : n.trip_counts) {
        if (!first) s += ",";
        s += std::to_string(t);
        first = false;
      }
      s += "}";
    }
    return s;
  }
  std::string s = std::string(op_name(n.kind)) + " #" + std::to_string(n.id) + "\\n" + loc_to_string(n.loc);
  if (!n.attrs.empty()) s += "\\n" + dot_escape(attrs_to_string(n.attrs));
  for (std::size_t i = 0; i < n.inputs.size(); ++i) {
    for (const auto& src : n.inputs[i].sources) {
      if (src.kind == InputSource::Kind::kFeed) s += "\\nfeed[" + std::to_string(i) + "]";
    }
  }
  if (n.fetch) s += "\\nfetch";
  return s;
}

inline void dot_region(const TraceGraph& tg, RegionId r, int depth, std::string& out) {
  std::string pad(static_cast<std::size_t>(depth + 1) * 2, ' ');
  const Region& reg = tg.region(r);
  for (NodeId id : reg.nodes) {
    const Node& n = tg.node(id);
    std::string shape = n.type == NodeType::kOp ? "box" : (n.type == NodeType::kLoop ? "box3d" : "ellipse");
    std::string name = n.type == NodeType::kStart || n.type == NodeType::kEnd
                           ? std::string(node_type_name(n.type)) + (r == 0 ? "" : std::to_string(r))
                           : "";
    out += pad + "n" + std::to_string(id) + " [shape=" + shape + ", label=\"" +
           (name.empty() ? dot_node_label(n) : (n.type == NodeType::kStart ? "Start" : "End")) + "\"];\n";
  }
  for (NodeId id : reg.nodes) {
    for (NodeId c : tg.node(id).children) {
      out += pad + "n" + std::to_string(id) + " -> n" + std::to_string(c) + ";\n";
    }
  }
  for (NodeId id : reg.nodes) {
    const Node& n = tg.node(id);
    if (n.type != NodeType::kLoop) continue;
    out += pad + "subgraph cluster_loop" + std::to_string(id) + " {\n";
    out += pad + "  label=\"Loop " + std::to_string(n.loop_id) + " body\";\n";
    dot_region(tg, n.body, depth + 1, out);
    out += pad + "}\n";
    out += pad + "n" + std::to_string(id) + " -> n" + std::to_string(tg.region(n.body).start) + " [style=dashed];\n";
  }
}

}  // namespace detail

// Node labels: "Kind #id", location, attributes, one "feed[i]" line per
// fed input, and "fetch" when the node's output is materialized by the host.
inline std::string to_dot(const TraceGraph& tg) {
  std::string out = "digraph tracegraph {\n  rankdir=TB;\n";
  detail::dot_region(tg, tg.root(), 0, out);
  out += "}\n";
  return out;
}

inline constexpr int kTraceGraphJsonVersion = 1;

namespace detail {

inline nlohmann::json attr_to_json(const AttrValue& v) {
  if (auto i = v.get_if<std::int64_t>()) return {{"int", *i}};
  if (auto d = v.get_if<double>()) return {{"float", *d}};
  if (auto s = v.get_if<std::string>()) return {{"string", *s}};
  return {{"shape", *v.get_if<Shape>()}};
}

inline AttrValue attr_from_json(const nlohmann::json& j) {
  if (j.contains("int")) return AttrValue(j.at("int").get<std::int64_t>());
  if (j.contains("float")) return AttrValue(j.at("float").get<double>());
  if (j.contains("string")) return AttrValue(j.at("string").get<std::string>());
  return AttrValue(j.at("shape").get<Shape>());
}

inline nlohmann::json slot_to_json(const FeedSlot& s) { return {s.stmt_id, s.site, s.input}; }
inline FeedSlot slot_from_json(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace detail

inline nlohmann::json tracegraph_to_json(const TraceGraph& tg) {
  using nlohmann::json;
  json nodes = json::array();
  for (const Node& n : tg.nodes()) {
    json j = {{"id", n.id}, {"type", node_type_name(n.type)}, {"region", n.region}};
    if (n.type == NodeType::kOp) {
      j["kind"] = op_name(n.kind);
      json attrs = json::object();
      for (const auto& [k, v] : n.attrs) attrs[k] = detail::attr_to_json(v);
      j["attrs"] = attrs;
      j["loc"] = {{"stmt", n.loc.stmt_id}, {"site", n.loc.site}, {"loop_path", n.loc.loop_path}};
      json inputs = json::array();
      for (const auto& b : n.inputs) {
        json srcs = json::array();
        for (const auto& s : b.sources) {
          if (s.kind == InputSource::Kind::kFeed) srcs.push_back({{"feed", detail::slot_to_json(s.slot)}});
          else srcs.push_back({{"producer", s.producer}});
        }
        inputs.push_back({{"sources", srcs}, {"explicit_occurrence", b.explicit_occurrence}});
      }
      j["inputs"] = inputs;
      j["fetch"] = n.fetch;
    } else if (n.type == NodeType::kLoop) {
      j["loop_id"] = n.loop_id;
      j["body"] = n.body;
      j["trip_counts"] = n.trip_counts;
    }
    j["children"] = n.children;
    nodes.push_back(j);
  }
  json regions = json::array();
  for (const Region& r : tg.regions()) {
    regions.push_back({{"id", r.id}, {"start", r.start}, {"end", r.end}, {"owner", r.owner}});
  }
  return {{"version", kTraceGraphJsonVersion}, {"regions", regions}, {"nodes", nodes}};
}

inline TraceGraph tracegraph_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kTraceGraphJsonVersion) fail(ErrorCode::kMalformedTrace, "unsupported TraceGraph version");
  TraceGraph tg;
  const auto& nodes = j.at("nodes");
  // Rebuild in id order; node and region creation order reproduces the ids.
  for (const auto& jn : nodes) {
    NodeId id = jn.at("id").get<NodeId>();
    std::string type = jn.at("type").get<std::string>();
    RegionId region = jn.at("region").get<RegionId>();
    if (id < static_cast<NodeId>(tg.node_count())) continue;  // created with its region
    if (type == "op") {
      OpEvent ev;
      auto kind = op_from_name(jn.at("kind").get<std::string>());
      if (!kind) fail(ErrorCode::kMalformedTrace, "unknown op kind in TraceGraph JSON");
      ev.kind = *kind;
      for (const auto& [k, v] : jn.at("attrs").items()) ev.attrs[k] = detail::attr_from_json(v);
      ev.loc.stmt_id = jn.at("loc").at("stmt").get<int>();
      ev.loc.site = jn.at("loc").at("site").get<int>();
      ev.loc.loop_path = jn.at("loc").at("loop_path").get<std::vector<LoopId>>();
      ev.inputs.resize(jn.at("inputs").size());
      NodeId got = tg.add_op_node(region, ev);
      if (got != id) fail(ErrorCode::kMalformedTrace, "node ids in TraceGraph JSON are not dense");
      Node& n = tg.node(got);
      std::size_t i = 0;
      for (const auto& jb : jn.at("inputs")) {
        for (const auto& js : jb.at("sources")) {
          if (js.contains("feed")) n.inputs[i].sources.push_back(InputSource::from_feed(detail::slot_from_json(js.at("feed"))));
          else n.inputs[i].sources.push_back(InputSource::from_producer(js.at("producer").get<NodeId>()));
        }
        n.inputs[i].explicit_occurrence = jb.at("explicit_occurrence").get<bool>();
        ++i;
      }
      n.fetch = jn.at("fetch").get<bool>();
    } else if (type == "loop") {
      NodeId got = tg.add_loop_node(region, jn.at("loop_id").get<LoopId>());
      if (got != id) fail(ErrorCode::kMalformedTrace, "node ids in TraceGraph JSON are not dense");
      for (auto t : jn.at("trip_counts")) tg.node(got).trip_counts.insert(t.get<std::int64_t>());
    } else {
      fail(ErrorCode::kMalformedTrace, "unexpected node order in TraceGraph JSON");
    }
  }
  for (const auto& jn : nodes) {
    NodeId id = jn.at("id").get<NodeId>();
    for (const auto& c : jn.at("children")) tg.add_edge(id, c.get<NodeId>());
  }
  return tg;
}

}  // namespace duet
