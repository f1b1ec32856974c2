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

#include <random>

#include "duet/duet.hpp"
#include "support.hpp"

namespace duet {
namespace {

using testing::synthetic_event;

struct Counts {
  int switches = 0, whiles = 0, unrolled = 0, ops = 0, feeds = 0, fetches = 0;
};

void count(const SymBlock& b, Counts& c) {
  for (const auto& inst : b.insts) {
    std::visit(
        [&](const auto& i) {
          using T = std::decay_t<decltype(i)>;
          if constexpr (std::is_same_v<T, ExecOp>) ++c.ops;
          if constexpr (std::is_same_v<T, InputFeed>) ++c.feeds;
          if constexpr (std::is_same_v<T, OutputFetch>) ++c.fetches;
          if constexpr (std::is_same_v<T, SwitchCase>) {
            ++c.switches;
            for (const auto& k : i.cases) count(k, c);
          }
          if constexpr (std::is_same_v<T, While>) {
            ++c.whiles;
            count(i.body[0], c);
          }
          if constexpr (std::is_same_v<T, UnrolledLoop>) {
            ++c.unrolled;
            for (const auto& k : i.copies) count(k, c);
          }
        },
        inst.v);
  }
}

Counts count(const SymProgram& sp) {
  Counts c;
  count(sp.body, c);
  return c;
}

// Start -> a -> b -> c -> End
TraceGraph chain(std::vector<NodeId>& ids) {
  TraceGraph tg;
  NodeId prev = tg.start();
  for (int i = 0; i < 3; ++i) {
    ids.push_back(tg.add_op_node(tg.root(), synthetic_event(i)));
    tg.add_edge(prev, ids.back());
    prev = ids.back();
  }
  tg.add_edge(prev, tg.end());
  return tg;
}

TraceGraph two_path_graph() {
  auto path = testing::corpus_dir() / "fig3.tl";
  static Program prog = testing::load_program(path);
  return trace_steps(prog, dataset_for(path, 0), {}, 2);
}

TEST(PostDominators, LinearChain) {
  std::vector<NodeId> ids;
  TraceGraph tg = chain(ids);
  auto ip = post_dominators(tg);
  EXPECT_EQ(ip.at(tg.start()), ids[0]);
  EXPECT_EQ(ip.at(ids[0]), ids[1]);
  EXPECT_EQ(ip.at(ids[1]), ids[2]);
  EXPECT_EQ(ip.at(ids[2]), tg.end());
  EXPECT_EQ(ip.count(tg.end()), 0u);
}

TEST(PostDominators, Diamond) {
  TraceGraph tg;
  NodeId a = tg.add_op_node(0, synthetic_event(0)), b = tg.add_op_node(0, synthetic_event(1)),
         m = tg.add_op_node(0, synthetic_event(2));
  tg.add_edge(tg.start(), a);
  tg.add_edge(tg.start(), b);
  tg.add_edge(a, m);
  tg.add_edge(b, m);
  tg.add_edge(m, tg.end());
  EXPECT_EQ(post_dominators(tg).at(tg.start()), m);
}

TEST(PostDominators, TwoPathGraphJoinsAtRelu) {
  TraceGraph tg = two_path_graph();
  NodeId mul = tg.node(tg.start()).children[1];
  NodeId relu = tg.node(mul).children[0];
  EXPECT_EQ(tg.node(relu).kind, OpKind::kRelu);
  EXPECT_EQ(post_dominators(tg).at(tg.start()), relu);
}

TEST(Structure, TwoPathGraphShape) {
  TraceGraph tg = two_path_graph();
  SymProgram sp = structure(tg);
  const auto& body = sp.body.insts;
  ASSERT_FALSE(body.empty());
  const auto* sc = std::get_if<SwitchCase>(&body[0].v);
  ASSERT_NE(sc, nullptr);
  EXPECT_EQ(sc->branch, tg.start());
  ASSERT_EQ(sc->cases.size(), 2u);
  auto ops_of = [](const SymBlock& b) {
    std::vector<OpKind> k;
    for (const auto& i : b.insts) {
      if (auto op = std::get_if<ExecOp>(&i.v)) k.push_back(op->kind);
    }
    return k;
  };
  EXPECT_EQ(ops_of(sc->cases[0]), (std::vector<OpKind>{OpKind::kAdd, OpKind::kMul}));
  EXPECT_EQ(ops_of(sc->cases[1]), (std::vector<OpKind>{OpKind::kMul}));
  // feeds precede the first op of case 0 (x and the prologue tensor)
  EXPECT_TRUE(std::holds_alternative<InputFeed>(sc->cases[0].insts[0].v));
  // then Relu, its fetch, and the loop
  std::vector<std::size_t> kinds;
  for (std::size_t i = 1; i < body.size(); ++i) kinds.push_back(body[i].v.index());
  ASSERT_EQ(kinds.size(), 3u);
  EXPECT_EQ(std::get<ExecOp>(body[1].v).kind, OpKind::kRelu);
  EXPECT_TRUE(std::holds_alternative<OutputFetch>(body[2].v));
  const auto* w = std::get_if<While>(&body[3].v);
  ASSERT_NE(w, nullptr);
  EXPECT_EQ(ops_of(w->body[0]), (std::vector<OpKind>{OpKind::kMatMul}));
  Counts c = count(sp);
  EXPECT_EQ(c.switches, 1);
  EXPECT_EQ(c.whiles, 1);
  EXPECT_EQ(c.ops, 5);
  EXPECT_EQ(c.fetches, 1);
  EXPECT_EQ(sp.exec_ops, 5u);
}

TEST(Structure, LinearChainHasNoControlFlow) {
  std::vector<NodeId> ids;
  SymProgram sp = structure(chain(ids));
  Counts c = count(sp);
  EXPECT_EQ(c.switches + c.whiles + c.unrolled, 0);
  EXPECT_EQ(c.ops, 3);
  EXPECT_EQ(path_language(sp, 0), (PathSet{OpPath{ids[0], ids[1], ids[2]}}));
}

TEST(Structure, SharedTailIsDuplicated) {
  TraceGraph tg;
  NodeId a = tg.add_op_node(0, synthetic_event(0)), b = tg.add_op_node(0, synthetic_event(1)),
         x = tg.add_op_node(0, synthetic_event(2));
  tg.add_edge(tg.start(), a);
  tg.add_edge(tg.start(), b);
  tg.add_edge(a, x);
  tg.add_edge(b, x);
  tg.add_edge(a, tg.end());
  tg.add_edge(x, tg.end());
  // ipdom(Start) = End, so x appears in both cases of the outer switch
  SymProgram sp = structure(tg);
  EXPECT_EQ(count(sp).ops, 4);
  EXPECT_EQ(path_language(sp, 0), testing::graph_paths(tg, 0));
  EXPECT_EQ(path_language(sp, 0), (PathSet{{a}, {a, x}, {b, x}}));
}

TEST(Structure, BudgetExceeded) {
  std::vector<NodeId> ids;
  TraceGraph tg = chain(ids);
  GenConfig cfg;
  cfg.max_ops = 2;
  try {
    structure(tg, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetExceeded);
  }
}

TEST(Structure, IsDeterministic) {
  TraceGraph tg = two_path_graph();
  EXPECT_EQ(symprog_to_dot(structure(tg)), symprog_to_dot(structure(tg)));
}

TEST(CaseMapTest, IndicesFollowChildOrder) {
  TraceGraph tg = two_path_graph();
  CaseMap m = case_map(tg);
  ASSERT_EQ(m.size(), 1u);
  const auto& start = tg.node(tg.start());
  EXPECT_EQ(m.at(tg.start()).at(start.children[0]), 0);
  EXPECT_EQ(m.at(tg.start()).at(start.children[1]), 1);
}

TEST(PathLanguage, SwitchGivesTwoSequences) {
  SymProgram sp;
  SwitchCase sc{0, {}};
  sc.cases.push_back(SymBlock{{SymInst{ExecOp{1}}}});
  sc.cases.push_back(SymBlock{{SymInst{ExecOp{2}}}});
  sp.body.insts.push_back({sc});
  EXPECT_EQ(path_language(sp, 0).size(), 2u);
}

TEST(PathLanguage, ExplosionGuard) {
  SymProgram sp;
  for (int i = 0; i < 20; ++i) {
    SwitchCase sc{i, {}};
    sc.cases.push_back(SymBlock{{SymInst{ExecOp{2 * i}}}});
    sc.cases.push_back(SymBlock{{SymInst{ExecOp{2 * i + 1}}}});
    sp.body.insts.push_back({sc});
  }
  EXPECT_THROW(path_language(sp, 0, 1000), Error);
}

TEST(PathLanguage, RandomDagsMatchBruteForce) {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    TraceGraph tg = testing::random_dag(rng, 10, 3);
    ASSERT_FALSE(tg.check_invariants()) << "dag " << i;
    SymProgram sp = structure(tg);
    if (path_language(sp, 0) != testing::graph_paths(tg, 0)) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(PathLanguage, CorpusGraphsMatchBruteForce) {
  for (const auto& f : testing::corpus_files()) {
    Program p = testing::load_program(f);
    TraceGraph tg = trace_steps(p, dataset_for(f, 0), {}, std::min<std::int64_t>(p.step_count, 12));
    SymProgram sp = structure(tg);
    auto bound = testing::max_trip_count(tg);
    EXPECT_EQ(path_language(sp, bound), testing::graph_paths(tg, bound)) << f;
  }
}

TEST(Unrolling, ConstantTripLoopHasNoWhile) {
  auto f = testing::corpus_dir() / "unroll_const.tl";
  Program p = testing::load_program(f);
  Counts c = count(structure(trace_steps(p, dataset_for(f, 0), {}, 4)));
  EXPECT_EQ(c.whiles, 0);
  EXPECT_EQ(c.unrolled, 1);
}

TEST(Unrolling, VariableTripLoopHasOneWhile) {
  auto f = testing::corpus_dir() / "unroll_var.tl";
  Program p = testing::load_program(f);
  Counts c = count(structure(trace_steps(p, dataset_for(f, 0), {}, 8)));
  EXPECT_EQ(c.whiles, 1);
  EXPECT_EQ(c.unrolled, 0);
}

TEST(Communication, FeedsAndFetchesPerInstance) {
  // Every static feed binding and fetch flag appears once per emitted
  // instance of its node.
  for (const auto& f : testing::corpus_files()) {
    Program p = testing::load_program(f);
    TraceGraph tg = trace_steps(p, dataset_for(f, 0), {}, std::min<std::int64_t>(p.step_count, 12));
    SymProgram sp = structure(tg);
    std::map<NodeId, int> instances, fetches, feeds;
    std::function<void(const SymBlock&)> walk = [&](const SymBlock& b) {
      for (const auto& inst : b.insts) {
        if (auto op = std::get_if<ExecOp>(&inst.v)) ++instances[op->node];
        if (auto o = std::get_if<OutputFetch>(&inst.v)) ++fetches[o->node];
        if (auto i = std::get_if<InputFeed>(&inst.v)) ++feeds[i->node];
        if (auto sc = std::get_if<SwitchCase>(&inst.v)) for (const auto& c : sc->cases) walk(c);
        if (auto w = std::get_if<While>(&inst.v)) walk(w->body[0]);
        if (auto u = std::get_if<UnrolledLoop>(&inst.v)) for (const auto& c : u->copies) walk(c);
      }
    };
    walk(sp.body);
    for (const auto& [node, n] : instances) {
      const Node& nd = tg.node(node);
      int static_feeds = 0;
      for (const auto& b : nd.inputs) static_feeds += !b.dynamic() && b.sources.size() == 1 && b.sources[0].kind == InputSource::Kind::kFeed;
      EXPECT_EQ(fetches[node], nd.fetch ? n : 0) << f << " node " << node;
      EXPECT_EQ(feeds[node], static_feeds * n) << f << " node " << node;
    }
  }
}

TEST(SymDot, Shapes) {
  EXPECT_EQ(symprog_to_dot(SymProgram{}), "digraph symbolic {\n}\n");
  std::string dot = symprog_to_dot(structure(two_path_graph()));
  EXPECT_NE(dot.find("SwitchCase @"), std::string::npos);
  EXPECT_NE(dot.find("While L"), std::string::npos);
  auto f = testing::corpus_dir() / "unroll_const.tl";
  Program p = testing::load_program(f);
  std::string u = symprog_to_dot(structure(trace_steps(p, dataset_for(f, 0), {}, 2)));
  EXPECT_NE(u.find("copy 0"), std::string::npos);
  EXPECT_NE(u.find("copy 1"), std::string::npos);
}

TEST(SymDot, TwoPathProgramMatchesGolden) {
  EXPECT_EQ(symprog_to_dot(structure(two_path_graph())),
            read_file((testing::golden_dir() / "two_path_symgraph.dot").string()));
}

}  // namespace
}  // namespace duet
