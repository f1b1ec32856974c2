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
#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "duet/duet.hpp"
#include "support.hpp"

namespace duet {
namespace {

TraceGraph two_path_graph(int steps = 2) {
  auto path = testing::corpus_dir() / "fig3.tl";
  static Program prog = testing::load_program(path);
  return trace_steps(prog, dataset_for(path, 0), {}, steps);
}

std::vector<Trace> two_path_traces() {
  auto path = testing::corpus_dir() / "fig3.tl";
  static Program prog = testing::load_program(path);
  std::vector<std::string> out;
  ExecState st = init_state(prog, dataset_for(path, 0), {}, out);
  std::vector<Trace> traces;
  for (st.step = 0; st.step < 2; ++st.step) traces.push_back(run_traced_step(st, {}, out));
  return traces;
}

std::string read_golden(const std::string& name) { return read_file((testing::golden_dir() / name).string()); }

bool cursor_accepts(const TraceGraph& tg, const Trace& t) {
  Cursor c(tg);
  for (const auto& ev : t.events) {
    if (!c.advance(ev)) return false;
  }
  return c.finished();
}

TEST(Merge, TwoPathTracesGiveBranchMergingAtRelu) {
  TraceGraph tg = two_path_graph();
  ASSERT_FALSE(tg.check_invariants());
  const Node& start = tg.node(tg.start());
  ASSERT_EQ(start.children.size(), 2u);
  const Node& add = tg.node(start.children[0]);
  const Node& mul_b = tg.node(start.children[1]);
  EXPECT_EQ(add.kind, OpKind::kAdd);
  EXPECT_EQ(mul_b.kind, OpKind::kMul);
  ASSERT_EQ(add.children.size(), 1u);
  const Node& mul_a = tg.node(add.children[0]);
  EXPECT_EQ(mul_a.kind, OpKind::kMul);
  EXPECT_NE(mul_a.loc, mul_b.loc);
  ASSERT_EQ(mul_a.children.size(), 1u);
  ASSERT_EQ(mul_b.children.size(), 1u);
  EXPECT_EQ(mul_a.children[0], mul_b.children[0]);
  const Node& relu = tg.node(mul_a.children[0]);
  EXPECT_EQ(relu.kind, OpKind::kRelu);
  EXPECT_TRUE(relu.fetch);
  ASSERT_EQ(relu.children.size(), 1u);
  const Node& loop = tg.node(relu.children[0]);
  ASSERT_EQ(loop.type, NodeType::kLoop);
  EXPECT_EQ(loop.trip_counts, (std::set<std::int64_t>{1, 2}));
  EXPECT_EQ(loop.children, (std::vector<NodeId>{tg.end()}));
  const Region& body = tg.region(loop.body);
  EXPECT_EQ(body.nodes.size(), 3u);  // Start, MatMul, End
  const Node& mm = tg.node(tg.node(body.start).children.at(0));
  EXPECT_EQ(mm.kind, OpKind::kMatMul);
  EXPECT_EQ(mm.children, (std::vector<NodeId>{body.end}));
  // root: Start, End, Add, Mul, Relu, Loop, Mul
  EXPECT_EQ(tg.region(tg.root()).nodes.size(), 7u);
}

TEST(Merge, TwoPathGraphMatchesGoldenJson) {
  TraceGraph tg = two_path_graph();
  auto want = nlohmann::json::parse(read_golden("two_path_tracegraph.json"));
  EXPECT_EQ(tracegraph_to_json(tg), want) << tracegraph_to_json(tg).dump(1);
}

TEST(Merge, TwoPathGraphMatchesGoldenDot) {
  EXPECT_EQ(to_dot(two_path_graph()), read_golden("two_path_tracegraph.dot"));
}

TEST(Merge, SingleTraceIsALinearChain) {
  TraceGraph tg = two_path_graph(1);
  NodeId n = tg.start();
  int ops = 0;
  while (n != tg.end()) {
    ASSERT_EQ(tg.node(n).children.size(), 1u);
    n = tg.node(n).children[0];
    ops += tg.node(n).type != NodeType::kEnd;
  }
  EXPECT_EQ(ops, 4);  // Add, Mul, Relu, Loop
}

TEST(Merge, ReportsOnEmptyAndRepeatedMerge) {
  auto traces = two_path_traces();
  TraceGraph tg;
  EXPECT_TRUE(tg.empty());
  auto first = merge_trace(tg, traces[0]);
  EXPECT_FALSE(first.covered);
  EXPECT_EQ(first.nodes_added, 5u);  // Add, Mul, Relu, Loop, MatMul
  auto again = merge_trace(tg, traces[0]);
  EXPECT_TRUE(again.covered);
  EXPECT_EQ(again.nodes_added, 0u);
  EXPECT_EQ(again.edges_added, 0u);
  auto second = merge_trace(tg, traces[1]);
  EXPECT_FALSE(second.covered);
  EXPECT_EQ(second.nodes_added, 1u);
}

TEST(Covers, DoesNotModifyTheGraph) {
  auto traces = two_path_traces();
  TraceGraph tg;
  merge_trace(tg, traces[0]);
  auto before = tracegraph_to_json(tg);
  EXPECT_TRUE(covers(tg, traces[0]));
  EXPECT_FALSE(covers(tg, traces[1]));
  EXPECT_EQ(tracegraph_to_json(tg), before);
}

TEST(Covers, ExtraOpIsNotCovered) {
  auto t = two_path_traces()[1];
  TraceGraph tg;
  merge_trace(tg, t);
  Trace longer = t;
  OpEvent extra = std::get<OpEvent>(longer.events[0]);
  extra.outputs = {999};
  longer.events.insert(longer.events.end() - 1, extra);
  EXPECT_FALSE(covers(tg, longer));
}

TEST(Covers, KnownTripCountIsCovered) {
  auto traces = two_path_traces();
  TraceGraph tg;
  merge_trace(tg, traces[0]);
  merge_trace(tg, traces[1]);
  // The false path again but with a trip count of 2, which the true path saw.
  Trace t = traces[1];
  auto exit_it = std::find_if(t.events.begin(), t.events.end(), [](const auto& e) { return std::holds_alternative<LoopExit>(e); });
  OpEvent mm = std::get<OpEvent>(*(exit_it - 1));
  mm.inputs = {HandleRef{mm.outputs[0]}, mm.inputs[1]};
  mm.outputs = {1000};
  LoopId l = std::get<LoopExit>(*exit_it).loop;
  t.events.insert(exit_it, {LoopIterStart{l}, mm});
  EXPECT_NO_THROW(validate_trace(t));
  EXPECT_TRUE(covers(tg, t));
}

TEST(Merge, OpFreeLoopsProduceNoLoopNode) {
  Program p = parse("steps 2 { let x = fill([1], 0)\n for i in range(3) { let a = 1 }\n x = neg(x) }");
  TraceGraph tg = trace_steps(p, Dataset::synthetic(0), {}, 2);
  for (const Node& n : tg.nodes()) EXPECT_NE(n.type, NodeType::kLoop);
}

TEST(Merge, MalformedTraceIsRejected) {
  Trace t;
  t.events.push_back(LoopEnter{0});
  t.events.push_back(StepEnd{});
  TraceGraph tg;
  try {
    merge_trace(tg, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedTrace);
  }
}

TEST(Cursor, SecondPathEmitsCaseAndLoopDecisions) {
  TraceGraph tg = two_path_graph();
  auto t = two_path_traces()[1];
  Cursor c(tg);
  std::vector<Decision> ds;
  std::vector<NodeId> visited;
  for (const auto& ev : t.events) {
    auto adv = c.advance(ev);
    ASSERT_TRUE(adv);
    if (std::holds_alternative<OpEvent>(ev)) visited.push_back(adv->node);
    for (const auto& d : adv->decisions) {
      if (!std::holds_alternative<BindDecision>(d)) ds.push_back(d);
    }
  }
  EXPECT_TRUE(c.finished());
  const Node& start = tg.node(tg.start());
  NodeId loop = tg.node(tg.node(start.children[1]).children[0]).children[0];
  LoopId lid = tg.node(loop).loop_id;
  std::vector<Decision> want{CaseDecision{tg.start(), 1}, LoopDecision{lid, loop, true}, LoopDecision{lid, loop, false}};
  EXPECT_EQ(ds, want);
  ASSERT_EQ(visited.size(), 3u);
  EXPECT_EQ(visited[0], start.children[1]);
}

TEST(Cursor, LinearChainEmitsNoCaseDecisions) {
  TraceGraph tg = two_path_graph(1);
  auto t = two_path_traces()[0];
  Cursor c(tg);
  for (const auto& ev : t.events) {
    auto adv = c.advance(ev);
    ASSERT_TRUE(adv);
    for (const auto& d : adv->decisions) EXPECT_FALSE(std::holds_alternative<CaseDecision>(d));
  }
}

TEST(Cursor, SameKindAtAnotherStatementDiverges) {
  TraceGraph tg = two_path_graph(1);
  auto t = two_path_traces()[0];
  OpEvent ev = std::get<OpEvent>(t.events[0]);
  ev.loc.stmt_id += 100;
  Cursor c(tg);
  EXPECT_FALSE(c.advance(ev));
  EXPECT_TRUE(c.diverged());
  EXPECT_FALSE(c.advance(t.events[0]));
}

TEST(Cursor, EarlyStepEndDiverges) {
  TraceGraph tg = two_path_graph(1);
  auto t = two_path_traces()[0];
  Cursor c(tg);
  ASSERT_TRUE(c.advance(t.events[0]));
  EXPECT_FALSE(c.advance(StepEnd{}));
}

TEST(Cursor, UnfetchedNodeCannotBeMaterialized) {
  TraceGraph tg = two_path_graph(1);
  auto t = two_path_traces()[0];
  Cursor c(tg);
  ASSERT_TRUE(c.advance(t.events[0]));
  EXPECT_FALSE(c.fetch_target(std::get<OpEvent>(t.events[0]).outputs[0]));
  EXPECT_TRUE(c.diverged());
}

TEST(Properties, RandomTraceSequences) {
  int merges = 0;
  for (std::uint64_t seq = 0; seq < 500; ++seq) {
    testing::TraceGen gen(seq);
    TraceGraph tg;
    std::vector<Trace> seen;
    int len = 1 + static_cast<int>(seq % 6);
    for (int i = 0; i < len; ++i) {
      Trace t = gen.make();
      ASSERT_NO_THROW(validate_trace(t));
      merge_trace(tg, t);
      ++merges;
      auto bad = tg.check_invariants();
      ASSERT_FALSE(bad) << "sequence " << seq << ": " << *bad;
      // idempotence
      TraceGraph copy = tg;
      ASSERT_TRUE(merge_trace(copy, t).covered) << "sequence " << seq << " trace " << i;
      seen.push_back(t);
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      ASSERT_TRUE(covers(tg, seen[i])) << "sequence " << seq << " trace " << i;
      ASSERT_TRUE(cursor_accepts(tg, seen[i])) << "sequence " << seq << " trace " << i;
    }
  }
  EXPECT_GE(merges, 500);
}

TEST(Json, RoundTripsCorpusGraphs) {
  for (const auto& f : testing::corpus_files()) {
    Program p = testing::load_program(f);
    TraceGraph tg = trace_steps(p, dataset_for(f, 0), {}, std::min<std::int64_t>(p.step_count, 12));
    auto j = tracegraph_to_json(tg);
    TraceGraph back = tracegraph_from_json(j);
    EXPECT_EQ(tracegraph_to_json(back), j) << f;
    EXPECT_EQ(to_dot(back), to_dot(tg)) << f;
  }
}

TEST(Json, RejectsUnknownVersion) {
  auto j = tracegraph_to_json(TraceGraph{});
  j["version"] = 99;
  EXPECT_THROW(tracegraph_from_json(j), Error);
}

TEST(Dot, EmptyGraphHasOnlyStartAndEnd) {
  std::string dot = to_dot(TraceGraph{});
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_EQ(dot.find("cluster"), std::string::npos);
  EXPECT_NE(dot.find("Start"), std::string::npos);
  EXPECT_NE(dot.find("End"), std::string::npos);
}

TEST(Dot, NestedLoopsGiveNestedClusters) {
  Program p = parse("steps 1 { let x = fill([1], 1)\n for i in range(2) { for j in range(2) { x = neg(x) } } }");
  std::string dot = to_dot(trace_steps(p, Dataset::synthetic(0), {}, 1));
  auto first = dot.find("subgraph cluster");
  ASSERT_NE(first, std::string::npos);
  auto second = dot.find("subgraph cluster", first + 1);
  ASSERT_NE(second, std::string::npos);
  EXPECT_EQ(dot.find("subgraph cluster", second + 1), std::string::npos);
  // the inner cluster is written inside the outer one
  EXPECT_EQ(dot.rfind("\n  subgraph cluster", second), first - 3);
  EXPECT_EQ(dot.substr(second - 4, 4), "    ");
}

}  // namespace
}  // namespace duet
